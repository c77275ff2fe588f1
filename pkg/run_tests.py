"""
Test runner script for risforge.

    python run_tests.py            # fast suite
    python run_tests.py --all      # include the slow end-to-end checks
"""
import sys
import pytest

def run_tests():
    """Run the tests with coverage reporting."""
    extra = sys.argv[1:]
    test_args = [
        'tests/',
        '-v',
        '--cov=.',
        '--cov-report=term-missing',
        '--cov-report=html',
        '--cov-branch',
        '--cov-fail-under=80'
    ]

    if '--all' in extra:
        extra.remove('--all')
    else:
        test_args.extend(['-m', 'not slow'])

    # Add pytest arguments from command line
    test_args.extend(extra)

    return pytest.main(test_args)

if __name__ == '__main__':
    sys.exit(run_tests())

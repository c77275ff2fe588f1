#!/usr/bin/env python3
from setuptools import setup
import os

here = os.path.abspath(os.path.dirname(__file__))
with open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='risforge',
    version='1.0.0',
    description='Active multi-RIS MIMO link simulator and phase-configuration optimizer.',
    long_description=long_description,
    long_description_content_type='text/markdown',
    author='',
    author_email='',
    url='',
    py_modules=[
        'cli',
        'codebook',
        'config',
        'errors',
        'geometry_channel',
        'metrics',
        'optimizers',
        'scenario_io',
    ],
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'pydantic>=2.0.0',
        'python-dotenv>=1.0.0',
    ],
    entry_points={
        'console_scripts': [
            'risforge=cli:main',
        ],
    },
    data_files=[('scenarios', [os.path.join('scenarios', f) for f in sorted(os.listdir(os.path.join(here, 'scenarios')))])],
    include_package_data=True,
    python_requires='>=3.10',
    classifiers=[
        'Programming Language :: Python :: 3',
        'Environment :: Console',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering',
    ],
)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="podtann",
    version="0.1.0",
    description="POD internal state variables and thermodynamics-based energy networks for inelastic homogenization",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(
        exclude=(
            'test',
        ),
    ),
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
    ],
    entry_points={
        'console_scripts': [
            'podtann=podtann.cli:main',
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)

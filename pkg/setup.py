#!/usr/bin/env python
"""
Install shim for ecgnet, the NumPy SE-VGG-LSTM ECG classifier.

Package metadata, the ``ecgnet`` console script and the dev extras are all
declared in pyproject.toml and setup.cfg; ``pip install -e .`` reads them
directly, and this file only serves ``python setup.py develop``.
"""

import setuptools

if __name__ == "__main__":
    setuptools.setup()

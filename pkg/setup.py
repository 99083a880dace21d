#!/usr/bin/env python
"""
Настройка для установки пакета через pip.
"""
from setuptools import setup, find_packages

# Чтение requirements.txt, без комментариев и пустых строк
with open('cquant/requirements.txt', encoding='utf-8') as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith('#')]

# Чтение README.md для long_description
with open('README.md', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name="cquant",
    version="0.1.0",
    description="Ограниченное квантование вероятностных мер и оценка размерностей",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=requirements,
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    entry_points={
        "console_scripts": [
            "cquant=cquant.cli:main",
        ],
    },
)

from setuptools import setup, find_packages

with open("README.md","r") as fh:
    long_description = fh.read()

setup(
    name="srltools",
    version="0.0.0",
    description="Semantic role labeling with syntax-enhanced self-attention, on CoNLL-2009 corpora.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    classifiers=[
        "Programming Language :: Python :: 3"
    ],
    entry_points={
        "console_scripts": ["srltools=srltools.srltools:cli"]
    },
    install_requires=[
        "numpy",
        "pyyaml",
        "tqdm",
        "click"
    ],
    extras_require={
        "test": ["pytest"]
    }

)

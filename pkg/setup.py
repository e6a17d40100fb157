from setuptools import setup, find_packages

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(
    name="triad_da",
    version="0.1.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="Stochastic helical triad models and particle filter twin experiments",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/yourusername/triad_da",
    package_dir={'': 'src'},
    packages=find_packages('src'),
    package_data={"triad_da": ["config/*.yaml"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Physics",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
    install_requires=[
        "PyYAML>=6.0",
        "numpy>=1.22",
        "scipy>=1.8",
        "matplotlib>=3.5",
    ],
    entry_points={
        "console_scripts": [
            "triad-da=triad_da.cli.cli:main",
        ],
    },
)

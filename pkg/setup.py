"""
Setup script for the ctda package
"""
from setuptools import setup, find_packages

setup(
    name="ctda",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    include_package_data=True,
    install_requires=[
        "click>=8.1.3",
        "python-dotenv>=1.1.0",
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "pandas>=2.2.3",
        "scikit-learn>=1.5.0",
        "imageio>=2.34.0",
        "matplotlib>=3.8.0",
        "python-slugify>=8.0.4",
        "tabulate>=0.9.0",
        ],
    entry_points={
        "console_scripts": [
            "ctda=ctda.cli:cli",
        ],
    },
)

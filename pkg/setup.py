from setuptools import setup, find_packages

setup(
    name="dgieti",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "numpy",
        "scipy",
    ],
    entry_points={
        "console_scripts": ["dgieti=dgieti.cli:main"],
    },
    description="Dual-primal IETI solver for discontinuous Galerkin multipatch isogeometric diffusion problems",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires='>=3.8',
)

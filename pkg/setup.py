from setuptools import find_packages, setup

setup(
    name="replen",
    version="0.1.0",
    author="@aperitivo",
    author_email="esteban.delboca@gmail.com",
    install_requires=[
        "click>=8.1.2",
        "Jinja2>=3.1.2",
        "jmespath>=1.0.1",
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=2.0",
    ],
    setup_requires=["setuptools", "wheel"],
    python_requires=">=3.9",
    package_dir={"": "src"},
    packages=find_packages("src"),
    entry_points={"console_scripts": ["replen=replen.cli:main"]},
)

from setuptools import setup, find_packages


def readme():
    with open("README.md") as f:
        return f.read()


setup(
    name="scancolor",
    version="0.1.0",
    description="Colors 3D scans with photographs registered through Structure from Motion.",
    long_description=readme(),  # NB: Only used if upload to PyPi
    entry_points={"console_scripts": ["scancolor = scancolor.cli:main"]},
    install_requires=[
        "matplotlib",
        "numpy",
        "opencv-python-headless",
        "pandas>=1.5",
        "plyfile>=0.9",
        "python-dotenv",
        "scipy",
    ],
    include_package_data=True,
    license="MIT",
    packages=find_packages(include=["scancolor", "scancolor.*"]),
    zip_safe=False,
)

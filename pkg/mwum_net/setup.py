from setuptools import setup, find_packages

setup(
    name="mwum-net",
    version="1.0.0",
    packages=find_packages(exclude=["tests"]),
    py_modules=["main"],
    install_requires=[
        "numpy>=1.21.0",
        "matplotlib>=3.5.0",
    ],
    python_requires='>=3.8',
    entry_points={
        'console_scripts': [
            'mwum-net=main:main',
        ],
    },
    include_package_data=True,
    package_data={
        '': ['config.json', 'topologies/*.json'],
    },
    description="MWUM-alpha network model: packet simulation, fluid model, capacity LPs and workload analysis",
    keywords="back-pressure max-weight alpha-fair fluid-limit queueing",
)

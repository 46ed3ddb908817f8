"""
The setup file to make mvstdm a package
"""


from setuptools import setup

setup(
    name='mvstdm',
    version='0.1.0',
    packages=['mvstdm', 'configuration'],
    py_modules=['run'],
    include_package_data=True,
    python_requires='>=3.8',
    install_requires=[
        'click>=8.0',
        'numpy>=1.22',
        'scipy>=1.8',
        'pandas>=1.4',
        'arviz>=0.12,<1.0',
    ],
    entry_points={
        'console_scripts': ['mvstdm=run:cli'],
    },
)

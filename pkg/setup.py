"""
Setup script for srmaser.
"""

from setuptools import setup, find_packages
import os

# Read README for long description
readme_path = os.path.join(os.path.dirname(__file__), 'README.md')
long_description = ""
if os.path.exists(readme_path):
    with open(readme_path, 'r', encoding='utf-8') as f:
        long_description = f.read()

setup(
    name='srmaser',
    version='0.1.0',
    description='Superradiant spin-ensemble maser simulator - mean-field steady states, spectra and sweeps',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    include_package_data=True,
    package_data={
        'srmaser': ['presets.json'],
    },
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.9',
        'qutip>=4.7',
        'pydantic>=2.0.0',
        'python-dotenv>=1.0.0',
    ],
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'srmaser=srmaser.cli:main',
        ],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Physics',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    keywords='maser superradiance spin-ensemble cavity-qed mean-field lindblad',
)

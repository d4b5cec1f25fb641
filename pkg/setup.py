from setuptools import find_packages, setup

setup(
    name='src',
    packages=find_packages(exclude=['tests']),
    version='0.1.0',
    description='Pseudospectral ground states of the nonlocal Choquard equation and their numerical certificates.',
    license='',
    python_requires='>=3.8',
    install_requires=[
        'numba>=0.55.1',
        'numpy>=1.21.6',
        'pandas>=1.4',
        'python-dotenv>=0.5.1',
        'PyYAML>=6.0',
        'scipy>=1.8',
        'tqdm',
        'wandb',
    ],
    entry_points={'console_scripts': ['choquard = src.models.cli:main']},
)

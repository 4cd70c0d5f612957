from setuptools import setup, find_packages

setup(
    name='ro_norm',
    version='0.1',
    description='Reduced-order neural operators for unequal-domain mappings',

    # Choose your license
    license='BSD 3-Clause',
    # What does your project relate to?
    keywords='operator learning, neural operator, reduced order model, '
             'Laplace-Beltrami, proper orthogonal decomposition',

    packages=find_packages(exclude=['examples', 'examples.*']),
    python_requires='>=3.9',
    install_requires=[
        'numpy',
        'scipy',
        'torch',
        'pandas',
        'scikit-learn',
        'joblib',
        'tqdm',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': ['ro-norm=ro_norm.cli:main'],
    },
)

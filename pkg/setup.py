from setuptools import setup, find_packages

setup(
    name="carol_embeddings",
    version="0.2",
    description="Class-aware contrastive loss experiments for imbalanced binary text classification",
    packages=find_packages(exclude=['tests']),
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.24.3',
        'pandas>=2.0.0',
        'scipy>=1.10.1',
        'scikit-learn>=1.3.0',
        'joblib>=1.3.0',
        'matplotlib>=3.7.1',
        'seaborn>=0.12.2',
        'python-dotenv>=1.0.0',
    ],
    entry_points={
        'console_scripts': [
            'carol=src.cli:main',
        ],
    },
)

from setuptools import setup, find_packages

setup(
    name='candle-dqn',
    version='0.1.0',
    packages=find_packages(exclude=['tests']),
    install_requires=[
        'pandas',
        'numpy',
        'chardet',
        'scipy',
        'tqdm',
    ],
    extras_require={
        'test': ['pytest', 'hypothesis'],
    },
    entry_points={
        'console_scripts': ['candle-dqn=candle_dqn.main:main'],
    },
    description='Encoder-decoder deep Q-learning agents trading daily candlestick data',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    python_requires='>=3.9',
    classifiers=[
        'License :: OSI Approved :: MIT License',
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3',
        'Operating System :: OS Independent',
    ],
)

from setuptools import setup, find_packages

with open('README.md') as f:
    long_description = f.read()

setup(name='guidedplan',
      version='0.0.1',
      description='Reasoner-guided motion planning with a closed-loop '
      'driving benchmark',
      long_description=long_description,
      long_description_content_type='text/markdown',
      packages=find_packages(exclude=['test', 'test.*']),
      include_package_data=True,
      install_requires=[
          'numpy',
          'networkx',
          'shapely',
          'matplotlib',
          'pyyaml',
          'tqdm',
      ],
      entry_points={
          'console_scripts': ['guidedplan = guidedplan.cli:main',]
      },
      tests_require=[
          'pytest',
      ],
      classifiers=[
          "Programming Language :: Python :: 3",
          "Operating System :: OS Independent",
      ],
      python_requires='>=3.8')

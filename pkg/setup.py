from setuptools import setup, find_packages


def description():
    """Return description in Restructure Text format."""

    with open('description.rst') as f:
        return f.read()


setup(name='dpeval',
      version='1.0.0',
      packages=find_packages(exclude=['tests']),
      description='Fuel economy and emission evaluation from naturalistic driving primitives',
      long_description=description(),

      license='BSD',
      classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3'
      ],
      keywords=['driving primitives', 'hdp-hsmm', 'fuel economy', 'emissions', 'naturalistic driving'],

      python_requires='>=3.7',
      install_requires=[
          'numpy>=1.17',
          'pandas>=1.5',
          'PyYAML>=5.1',
          'requests>=2.21.0',
          'scipy>=1.4',
      ],

      entry_points={
          'console_scripts': [
              'dpe=dpeval.cli:main',
          ],
      },

      include_package_data=True,
      zip_safe=True,
      )

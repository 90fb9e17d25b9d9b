"""DPDS: Differentially Private Decision Support

DPDS answers decision-support queries over tabular data under
differential privacy. A query is a boolean combination of aggregate
threshold queries evaluated for every group-by cell; DPDS reports the
cells that satisfy it with bounded false-negative and false-positive
rates while spending as little privacy budget as it can, and ships a
Monte Carlo harness that measures both.

"""

DOCLINES = __doc__.split("\n")

with open('README.md', 'r', encoding='utf8') as file:
    long_description = file.read()


from setuptools import setup, find_packages
import os

# Get __version__ from dpds/__init__.py without importing the package
# __version__ has to be defined in the first line
with open('dpds/__init__.py', 'r') as f:
    exec(f.readline())

# BEFORE importing distutils, remove MANIFEST. distutils doesn't properly
# update it when the contents of directories change.
if os.path.exists('MANIFEST'):
    os.remove('MANIFEST')

def _get_requirements_from_files(groups_files):
    groups_reqlist = {}

    for k,v in groups_files.items():
        with open(v, 'r') as f:
            pkg_list = f.read().splitlines()
        groups_reqlist[k] = pkg_list

    return groups_reqlist

def setup_package():
    _groups_files = {
        'base': 'requirements.txt',
        'tests': 'requirements_tests.txt',
        'docs': 'requirements_docs.txt'
    }

    reqs = _get_requirements_from_files(_groups_files)
    install_reqs = reqs.pop('base')
    extras_reqs = reqs

    setup(name='dpds',  # name of package
          version=__version__,
          description=DOCLINES[0],
          long_description = long_description,
          long_description_content_type = 'text/markdown',
          python_requires='>=3.8',
          keywords='differential privacy, decision support, threshold queries',
          classifiers=[
            'Development Status :: 3 - Alpha',
            'Intended Audience :: Science/Research',
            'Intended Audience :: Developers',
            'Topic :: Scientific/Engineering',
            'Topic :: Security',
            'License :: OSI Approved :: BSD License',
            'Programming Language :: Python',
            'Programming Language :: Python :: 3.8',
            'Programming Language :: Python :: 3.9'
            ],
          license='3-Clause BSD',
          packages=find_packages(),
          install_requires=install_reqs,
          extras_require=extras_reqs,
          entry_points={'console_scripts': ['dpds=dpds.cli:main']},
          zip_safe=False)

if __name__ == '__main__':
    setup_package()

import os
import re
import unittest

SOURCE = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, 'docs', 'source')


class TestSphinxConfig(unittest.TestCase):
    def test_path_entries_import_the_package(self):
        with open(os.path.join(SOURCE, 'conf.py')) as handle:
            entries = re.findall(r"sys\.path\.insert\(0, os\.path\.abspath\('([^']*)'\)\)", handle.read())
        self.assertTrue(entries)
        for entry in entries:
            folder = os.path.normpath(os.path.join(SOURCE, entry))
            # automodule dpeval.* needs the folder that holds the package, not the package itself
            self.assertTrue(os.path.isfile(os.path.join(folder, 'dpeval', '__init__.py')), folder)
            self.assertFalse(os.path.isfile(os.path.join(folder, '__init__.py')), folder)


if __name__ == '__main__':
    unittest.main()

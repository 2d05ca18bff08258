import tempfile
import unittest
from pathlib import Path

from ibfgs.utils import atomic_write_text, parse_int_list, parse_str_list, safe_name


class UtilsTest(unittest.TestCase):

    def test_safe_name(self):
        self.assertEqual(safe_name('gauss_fold0_C1=1_C2=0.1_smooth'), 'gauss_fold0_C1=1_C2=0.1_smooth')
        self.assertEqual(safe_name('data/set one|x'), 'data_set_one_x')
        self.assertEqual(safe_name('///'), '_')

    def test_parse_lists(self):
        self.assertEqual(parse_int_list('-1, 0,2,'), [-1, 0, 2])
        self.assertEqual(parse_int_list(''), [])
        self.assertEqual(parse_str_list(' raw , dc ,,'), ['raw', 'dc'])
        with self.assertRaises(ValueError):
            parse_int_list('1,a')

    def test_atomic_write_creates_parents(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'a' / 'b' / 'out.csv'
            atomic_write_text(path, 'x,y\n1,2\n')
            atomic_write_text(path, 'x\n')
            self.assertEqual(path.read_text(encoding='utf-8'), 'x\n')
            self.assertEqual(sorted(p.name for p in path.parent.iterdir()), ['out.csv'])


if __name__ == '__main__':
    unittest.main()

import os
import re
import tempfile
from pathlib import Path

_UNSAFE = re.compile(r'[^A-Za-z0-9_.=+-]+')


def atomic_write_text(path: str | Path, text: str) -> None:
    """Writes ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def safe_name(text: str) -> str:
    """A file-name friendly version of ``text``."""
    return _UNSAFE.sub('_', text).strip('_') or '_'


def parse_int_list(text: str) -> list[int]:
    return [int(item) for item in text.split(',') if item.strip()]


def parse_str_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(',') if item.strip()]

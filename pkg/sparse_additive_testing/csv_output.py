import csv
import os
import tempfile
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Dict, Iterable, List, Optional, Sequence

from sparse_additive_testing.logging import stdout_logger

"""
CSV artifacts: written atomically, with a provenance comment line ahead of the header.
"""

PACKAGE = 'sparse_additive_testing'


def package_version() -> str:
    try:
        return version(PACKAGE)
    except PackageNotFoundError:
        return 'unknown'


def format_cell(value: Any) -> str:
    """
    Renders a cell; floats use their shortest round-trip form.

    Examples
    --------
    >>> format_cell(0.1)
    '0.1'
    >>> format_cell(None)
    ''
    """
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (set, frozenset)):
        return ' '.join(str(v) for v in sorted(value))
    if hasattr(value, 'value') and not isinstance(value, (int, str)):
        return str(value.value)
    return str(value)


def provenance_line(seed: int, config_digest: str, extra: Optional[Dict[str, Any]] = None) -> str:
    fields = {'seed': seed, 'config_hash': config_digest, 'version': package_version()}
    fields.update(extra or {})
    return '# ' + ' '.join(f'{key}={format_cell(value)}' for key, value in fields.items())


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]], provenance: str) -> str:
    """
    Writes a CSV atomically.

    Parameters
    ----------
    path : str
        The destination; its directory is created when missing.
    header : sequence of str
        Column names.
    rows : iterable of sequences
        Row values, rendered with format_cell.
    provenance : str
        The comment line written first, see provenance_line.

    Returns
    -------
    str
        The path written.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=directory, prefix='.', suffix='.csv.tmp')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(provenance.rstrip('\n') + '\n')
            writer = csv.writer(f)
            writer.writerow(header)
            count = 0
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f'Row {count} has {len(row)} cells for {len(header)} columns.')
                writer.writerow([format_cell(value) for value in row])
                count += 1
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    stdout_logger.info(f'Wrote {count} rows to {path}')
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    """
    Reads back a CSV written by write_csv, skipping the provenance line.
    """
    with open(path, 'r', newline='') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))

import os
from pathlib import Path

import pytest

from fttgru.data import RUL_FILE, TEST_FILE, TRAIN_FILE

DATA_DIR_ENV = "FTTGRU_DATA_DIR"


def fd001_dir():
    """Directory with the real FD001 files, or None (dataset is user-supplied)."""
    base = os.environ.get(DATA_DIR_ENV)
    if not base:
        return None
    base = Path(base)
    if all((base / f).exists() for f in (TRAIN_FILE, TEST_FILE, RUL_FILE)):
        return base
    return None


requires_fd001 = pytest.mark.skipif(
    fd001_dir() is None,
    reason=f"FD001 dataset not found (set {DATA_DIR_ENV} to the directory "
    "containing train_FD001.txt/test_FD001.txt/RUL_FD001.txt)",
)

import os
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent


def data_dir() -> Path:
    env = os.environ.get("EXPTEST_DATA_DIR")
    return Path(env) if env else REPO / "data"


def mnist_dir() -> Path:
    return data_dir() / "mnist"


def housing_csv() -> Path:
    return data_dir() / "housing" / "california_housing.csv"


def have_mnist() -> bool:
    return (mnist_dir() / "train-images-idx3-ubyte").exists()


def have_housing() -> bool:
    return housing_csv().exists()


needs_mnist = pytest.mark.skipif(not have_mnist(), reason="MNIST IDX files not found under $EXPTEST_DATA_DIR/mnist")
needs_housing = pytest.mark.skipif(not have_housing(), reason="housing CSV not found under $EXPTEST_DATA_DIR/housing")


# one line per acceptance criterion, printed after the run in criterion order
CRITERIA = {}


def record(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])

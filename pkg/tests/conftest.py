import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdapportion.model import VoteTensor, load_example  # noqa: E402

DISTRICTS = ("D1", "D2", "D3")
LISTS = ("A", "B", "C", "D", "E", "F")
GENDERS = ("F", "M")

# votes by (list, district); female then male
TABLE1_FEMALE = {
    "A": (583494, 365796, 364104),
    "B": (61674, 48078, 43416),
    "C": (192546, 431472, 857646),
    "D": (110664, 227484, 39774),
    "E": (0, 0, 0),
    "F": (0, 0, 74064),
}
TABLE1_MALE = {
    "A": (242112, 484302, 145398),
    "B": (20454, 18762, 23238),
    "C": (231600, 461640, 452682),
    "D": (65268, 72696, 36060),
    "E": (160686, 0, 0),
    "F": (0, 0, 99618),
}
TABLE2_FEMALE = {"A": (3, 2, 2), "B": (1, 0, 0), "C": (0, 2, 5), "D": (0, 2, 0), "E": (0, 0, 0), "F": (0, 0, 0)}
TABLE2_MALE = {"A": (1, 4, 1), "B": (0, 0, 0), "C": (1, 4, 3), "D": (0, 1, 0), "E": (0, 0, 0), "F": (0, 0, 1)}

TABLE3 = {
    "ccm": (13, 0, 17, 2, 0, 1),
    "tpm": (13, 1, 15, 3, 0, 1),
    "tpm3": (13, 1, 16, 3, 0, 0),
    "tpp": (12, 1, 15, 3, 1, 1),
    "tpp3": (13, 1, 15, 3, 1, 0),
}


def _tensor(female, male) -> np.ndarray:
    out = np.zeros((3, 6, 2), dtype=np.int64)
    for li, l in enumerate(LISTS):
        for di in range(3):
            out[di, li, 0] = female[l][di]
            out[di, li, 1] = male[l][di]
    return out


TABLE1 = _tensor(TABLE1_FEMALE, TABLE1_MALE)
TABLE2 = _tensor(TABLE2_FEMALE, TABLE2_MALE)


@pytest.fixture(scope="session")
def example():
    return load_example()


@pytest.fixture(scope="session")
def table1_votes():
    return VoteTensor((DISTRICTS, LISTS, GENDERS), TABLE1, ("district", "list", "gender"))


def random_tensor(rng, shape, low=1, high=1000, zero_prob=0.0):
    vals = rng.integers(low, high, size=shape)
    if zero_prob:
        vals[rng.random(shape) < zero_prob] = 0
    dims = tuple(tuple(f"{chr(97 + i)}{k}" for k in range(n)) for i, n in enumerate(shape))
    return VoteTensor(dims, vals)


def random_marginals(rng, votes: VoteTensor, house: int):
    """Integer marginals near the vote shares, each summing to ``house``."""
    from mdapportion.divisor import dhondt

    out = []
    for i in range(votes.ndim):
        proj = votes.projection(i)
        out.append(np.array(dhondt(proj, house).seats, dtype=np.int64))
    return out


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_criterion(number: int, passed, detail: str = "") -> None:
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    _ACCEPTANCE[number] = (status, detail)
    print(f"ACCEPTANCE {number}: {status} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")

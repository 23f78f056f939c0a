import numpy as np
import pytest
from scipy import ndimage


def smooth_noise(shape, sigma=2.0, seed=0):
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape), sigma)
    img -= img.min()
    return img / img.max()


def checkerboard(shape, cell):
    yy, xx = np.indices(shape)
    return (((xx // cell) + (yy // cell)) % 2).astype(np.float64)


def textured_scene(h=316, w=474, seed=0):
    """Blocks, a disc and smooth noise: a stand-in for a ~150k-pixel photo."""
    yy, xx = np.indices((h, w))
    img = smooth_noise((h, w), 3.0, seed) + 0.5 * checkerboard((h, w), 40)
    img += 0.3 * (((xx - w * 0.42) ** 2 + (yy - h * 0.47) ** 2) < 50**2)
    img -= img.min()
    return img / img.max()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scene():
    return textured_scene()


# acceptance criteria report: one line per criterion, shown after the run
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {name} ({detail})")

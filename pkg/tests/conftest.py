import numpy as np
import pytest

from echorange.audio import AudioClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_clip(rng):
    def make(frames=24000, channels=4, scale=0.3):
        return AudioClip(np.clip(rng.standard_normal((frames, channels)) * scale, -1, 1), 24000)

    return make


def small_rooms(n=3, order=2):
    from echorange.sim import RoomSpec

    dims = [(5.0, 4.0, 3.0), (6.0, 4.5, 2.8), (5.5, 5.0, 3.2), (6.5, 4.0, 3.0), (4.5, 4.5, 2.7), (7.0, 5.0, 3.1)]
    return [RoomSpec(dims[i], 0.4, order, f"r{i}") for i in range(n)]


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six short scenes in three rooms (one room per split)."""
    from echorange.sim import DatasetConfig, load_manifest, make_dataset

    cfg = DatasetConfig(
        small_rooms(3), 6, splits={"train": 1, "val": 1, "test": 1}, seed=11, duration_s=(1.5, 1.8), distance_m=(0.5, 2.0)
    )
    path = make_dataset(cfg, tmp_path_factory.mktemp("tiny") / "ds")
    return load_manifest(path)


_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(n, ok: bool, detail: str) -> None:
    """Print and remember one acceptance verdict line."""
    line = (f"criterion {n}", bool(ok), detail)
    _CRITERIA.append(line)
    print(f"{line[0]}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")

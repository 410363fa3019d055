import numpy as np
import pytest

SR = 16000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def on_bin_tones(bins, n_frames=31, fft_size=512, sample_rate=SR, seed=0):
    """Sum of cosines exactly on STFT bin centres, periodic in ``fft_size``."""
    phases = np.random.default_rng(seed).uniform(0, 2 * np.pi, len(bins))
    t = np.arange(n_frames * fft_size) / sample_rate
    return sum(np.cos(2 * np.pi * k * sample_rate / fft_size * t + p) for k, p in zip(bins, phases))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; shown in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

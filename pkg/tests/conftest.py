import pytest
import torch

from tscrec.data import Dataset, TimeSyncComment


def cell_lists(cell):
    """LSTMCell weights as nested Python lists for the scalar oracles."""
    return (
        cell.weight_ih.detach().tolist(),
        cell.weight_hh.detach().tolist(),
        cell.bias.detach().tolist(),
    )


def randomize(module, seed, scale=0.7):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.uniform_(-scale, scale, generator=gen)
    return module


def tsc(tsc_id, t, video="v1", user="u1", text="hello", polarity=1):
    return TimeSyncComment(tsc_id, user, video, float(t), text, polarity)


@pytest.fixture
def small_dataset():
    comments = [
        tsc("a1", 1.0, text="so good", user="u1"),
        tsc("a2", 2.0, text="so good lol", user="u2", polarity=1),
        tsc("a3", 3.5, text="boring bad", user="u1", polarity=0),
        tsc("a4", 4.0, text="great scene", user="u3"),
        tsc("b1", 0.5, video="v2", text="meh", user="u2", polarity=0),
        tsc("b2", 9.0, video="v2", text="wow wow", user="u3"),
    ]
    return Dataset.from_comments(comments)


# Acceptance criteria append (criterion, status, detail) here; printed once at the end.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"criterion {crit:>2}: {status}  {detail}")

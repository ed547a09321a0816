import numpy as np
import pytest


@pytest.fixture
def ratings_file(tmp_path):
    """Small MovieLens-style file: 12 users, 15 items, ratings 1..5 with timestamps."""
    rng = np.random.default_rng(0)
    lines = []
    for user in range(1, 13):
        items = rng.choice(np.arange(1, 16), size=int(rng.integers(1, 11)), replace=False)
        for item in items:
            lines.append(f"{user}\t{item}\t{rng.integers(1, 6)}\t{880000000 + len(lines)}")
    path = tmp_path / "u.data"
    path.write_text("\n".join(lines) + "\n")
    return path

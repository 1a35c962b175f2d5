import json

import numpy as np
import pytest

from kroncov import __version__
from kroncov.csvio import read_matrix, write_matrix, write_provenance


def test_matrix_round_trip_exact(tmp_path, rng):
    m = rng.standard_normal((4, 3)) * 1e-7
    path = tmp_path / "m.csv"
    write_matrix(path, m)
    assert np.array_equal(read_matrix(path), m)
    assert path.read_text().startswith("# rows=4 cols=3\n")


def test_read_rejects_bad_shapes(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# rows=2 cols=2\n1,2\n")
    with pytest.raises(ValueError):
        read_matrix(path)
    path.write_text("1,2\n3,4\n")
    with pytest.raises(ValueError):
        read_matrix(path)
    path.write_text("# rows=1 cols=2\n1,2,3\n")
    with pytest.raises(ValueError):
        read_matrix(path)


def test_provenance_sidecar(tmp_path):
    side = write_provenance(tmp_path / "out.csv", {"seed": 3, "p": np.int64(4)})
    payload = json.loads(side.read_text())
    assert side.name == "out.csv.provenance.json"
    assert payload["seed"] == 3 and payload["version"] == __version__
    assert payload["config"]["p"] == 4

import zipfile

import numpy as np
import pytest

from morphwalk.archive import FORMAT, load_map, read_header, save_map
from morphwalk.errors import InputError
from morphwalk.flow import FlowConfig, build_map, jacobian_dets
from morphwalk.geometry import Ball, FlowImage, domain_from_config


@pytest.fixture(scope="module")
def tmap():
    return build_map(FlowConfig(Ball([0, 0], 1), "x^2*sin(y)*t", steps=6, h=0.05))


def test_round_trip(tmp_path, tmap):
    p = tmp_path / "m.npz"
    save_map(tmap, p, meta={"seed": 1})
    back = load_map(p)
    assert back.header["format"] == FORMAT
    assert back.header["meta"] == {"seed": 1}
    for name in ("times", "seeds", "seed_index", "trajectories", "jacobians"):
        assert np.array_equal(getattr(back, name), getattr(tmap, name))
    assert all(np.array_equal(a, b) for a, b in zip(back.boundaries, tmap.boundaries))
    assert back.lipschitz == tmap.lipschitz
    pts = np.random.default_rng(0).uniform(-1.2, 1.2, size=(300, 2))
    assert np.array_equal(back.inverse(pts), tmap.inverse(pts), equal_nan=True)
    assert np.array_equal(jacobian_dets(back).variational, jacobian_dets(tmap).variational)


def test_same_map_same_bytes(tmp_path, tmap):
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    save_map(tmap, a)
    save_map(tmap, b)
    assert a.read_bytes() == b.read_bytes()
    assert zipfile.ZipFile(a).namelist()[0] == "header.json"


def test_without_fields(tmp_path, tmap):
    p = tmp_path / "m.npz"
    save_map(tmap, p, include_fields=False)
    back = load_map(p)
    assert back.fields == []
    with pytest.raises(InputError):
        back.inverse([[0.0, 0.0]])


def test_flow_image_from_archive(tmp_path, tmap):
    save_map(tmap, tmp_path / "m.npz")
    img = domain_from_config({"kind": "flow_image", "archive": "m.npz"}, base_dir=tmp_path)
    assert isinstance(img, FlowImage)
    assert img.describe()["archive"] == "m.npz"
    assert img.contains(tmap.images[len(tmap.images) // 2])


def test_bad_archives(tmp_path):
    p = tmp_path / "junk.npz"
    p.write_bytes(b"not a zip")
    with pytest.raises(InputError):
        read_header(p)
    with zipfile.ZipFile(p, "w") as zf:
        zf.writestr("header.json", '{"format": "other"}')
    with pytest.raises(InputError, match="format"):
        load_map(p)

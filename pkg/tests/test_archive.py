import struct

import numpy as np
import pytest

from reachfilter import archive
from reachfilter.archive import ArchiveError, decode, encode
from reachfilter.grid import GridDef, ScalarField
from reachfilter.hji import Mode, ValueFunction


def sample_vf(mode=Mode.SAFETY, converged=True):
    g = GridDef.build([(4, -1.0, 2.5), (3, -np.pi, np.pi, True)])
    rng = np.random.default_rng(0)
    times = np.array([0.0, 0.125, 0.3])
    return ValueFunction(g, times, [ScalarField(g, rng.normal(size=g.shape)) for _ in times], mode,
                         converged=converged)


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("converged", [False, True])
def test_round_trip_bitwise(mode, converged, tmp_path):
    vf = sample_vf(mode, converged)
    archive.save(vf, tmp_path / "v.hjvf")
    back = archive.load(tmp_path / "v.hjvf")
    assert back.grid == vf.grid and back.mode is mode and back.converged is converged
    assert back.times.tobytes() == vf.times.tobytes()
    assert back.values_array().tobytes() == vf.values_array().tobytes()
    assert encode(back) == encode(vf)


def test_layout_by_hand():
    vf = sample_vf()
    buf = encode(vf)
    expected = b"HJVF" + struct.pack("<IBI", 1, 3, 2)
    expected += struct.pack("<QddB", 4, -1.0, 2.5, 0) + struct.pack("<QddB", 3, -np.pi, np.pi, 1)
    expected += struct.pack("<Q", 3) + struct.pack("<3d", 0.0, 0.125, 0.3)
    assert buf[:len(expected)] == expected
    payload = np.frombuffer(buf[len(expected):], dtype="<f8")
    np.testing.assert_array_equal(payload, vf.values_array().ravel())  # C-order, time-major


def test_rejects_bad_magic_version_and_truncation():
    buf = encode(sample_vf())
    with pytest.raises(ArchiveError, match="magic"):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(ArchiveError, match="version"):
        decode(buf[:4] + struct.pack("<I", 2) + buf[8:])
    with pytest.raises(ArchiveError, match="payload"):
        decode(buf[:-8])
    with pytest.raises(ArchiveError, match="truncated"):
        decode(buf[:20])
    with pytest.raises(ArchiveError, match="mode"):
        decode(buf[:8] + b"\x80" + buf[9:])


def test_missing_file(tmp_path):
    with pytest.raises(ArchiveError):
        archive.load(tmp_path / "nope.hjvf")

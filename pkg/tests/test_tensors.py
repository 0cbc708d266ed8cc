import numpy as np
import pytest

from osm_localizer.tensors import (
    FeatureGrid,
    FrameTag,
    FrameTagError,
    TensorDataError,
    TensorFormatError,
    decode_osmf,
    encode_osmf,
    load_feature_tensor,
    sample_bilinear,
    save_feature_tensor,
)


def test_round_trip(tmp_path, rng):
    g = FeatureGrid(rng.standard_normal((4, 5, 3)).astype(np.float32), FrameTag.POLAR_BEV)
    p = tmp_path / "g.osmf"
    save_feature_tensor(g, p)
    back = load_feature_tensor(p)
    assert back.frame_tag == FrameTag.POLAR_BEV
    assert back.data.tobytes() == g.data.tobytes()


def test_header_layout(rng):
    blob = encode_osmf(np.zeros((2, 3, 4)), FrameTag.MAP_PLANE)
    assert blob[:4] == b"OSMF"
    assert int.from_bytes(blob[4:6], "little") == 1
    assert blob[6] == 3 and blob[7] == 3
    assert [int.from_bytes(blob[8 + 4 * i : 12 + 4 * i], "little") for i in range(3)] == [2, 3, 4]
    assert len(blob) == 20 + 4 * 24


def test_truncated_and_inconsistent():
    blob = encode_osmf(np.ones((2, 2, 2)), FrameTag.IMAGE_PLANE)
    with pytest.raises(TensorFormatError):
        decode_osmf(blob[:-3])
    with pytest.raises(TensorFormatError):
        decode_osmf(blob[:10])
    with pytest.raises(TensorFormatError):
        decode_osmf(b"OSMX" + blob[4:])
    bad_version = blob[:4] + (7).to_bytes(2, "little") + blob[6:]
    with pytest.raises(TensorFormatError):
        decode_osmf(bad_version)


def test_nan_payload_rejected():
    blob = encode_osmf(np.array([[[np.nan]]]), FrameTag.IMAGE_PLANE)
    with pytest.raises(TensorDataError):
        decode_osmf(blob)
    with pytest.raises(TensorDataError):
        FeatureGrid(np.full((1, 1, 1), np.inf), FrameTag.IMAGE_PLANE)


def test_frame_tag_check():
    g = FeatureGrid(np.zeros((1, 1, 1)), FrameTag.POLAR_BEV)
    assert g.require(FrameTag.POLAR_BEV) is g
    with pytest.raises(FrameTagError):
        g.require(FrameTag.CARTESIAN_BEV)


def test_bilinear_matches_reference(rng):
    grid = rng.standard_normal((6, 7, 2))
    rows = rng.uniform(-1.5, 7, 50)
    cols = rng.uniform(-1.5, 8, 50)
    got = sample_bilinear(grid, rows, cols)
    for n in range(50):
        want = np.zeros(2)
        r0, c0 = int(np.floor(rows[n])), int(np.floor(cols[n]))
        for r in (r0, r0 + 1):
            for c in (c0, c0 + 1):
                if 0 <= r < 6 and 0 <= c < 7:
                    want += (1 - abs(rows[n] - r)) * (1 - abs(cols[n] - c)) * grid[r, c]
        np.testing.assert_allclose(got[n], want, atol=1e-12)

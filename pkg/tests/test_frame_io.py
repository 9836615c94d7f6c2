import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from thumbforge.errors import (DimensionMismatch, MalformedFrameMarker, MalformedHeader, TruncatedFrame,
                               UnsupportedColorspace)
from thumbforge.frame_io import (Colorspace, SourceKind, frames_from_arrays, hsv_to_rgb, load_video, make_frame,
                                 next_frame, parse_y4m_header, read_image, read_y4m_bytes, rgb_to_hsv, to_gray,
                                 to_hsv, write_ppm, write_y4m)

from conftest import solid, texture


def _header(text):
    return io.BytesIO(text.encode("ascii"))


def test_header_basic():
    info = parse_y4m_header(_header("YUV4MPEG2 W320 H240 F30:1 C420\n"))
    assert (info.width, info.height, info.fps_num, info.fps_den) == (320, 240, 30, 1)
    assert info.colorspace is Colorspace.C420
    assert info.source is SourceKind.Y4M


def test_header_minimal_444():
    info = parse_y4m_header(_header("YUV4MPEG2 W2 H2 F1:1 C444\n"))
    assert (info.width, info.height, info.fps_num, info.fps_den, info.colorspace) == (2, 2, 1, 1, Colorspace.C444)


@pytest.mark.parametrize("text", ["YUV4MPEG2 H240 F30:1\n", "YUV4MPEG2 W320 F30:1\n", "YUV4MPEG2 W3 H2\n",
                                  "YUV4MPEG W3 H2 F1:1\n", "YUV4MPEG2 W0 H2 F1:1\n", "YUV4MPEG2 Wx H2 F1:1\n"])
def test_header_malformed(text):
    with pytest.raises(MalformedHeader):
        parse_y4m_header(_header(text))


def test_header_unsupported_colorspace():
    with pytest.raises(UnsupportedColorspace):
        parse_y4m_header(_header("YUV4MPEG2 W2 H2 F1:1 Cmono\n"))


def _y4m_444(y, u, v, w=2, h=2):
    planes = bytes([y] * (w * h)) + bytes([u] * (w * h)) + bytes([v] * (w * h))
    return f"YUV4MPEG2 W{w} H{h} F25:1 C444\n".encode() + b"FRAME\n" + planes


def test_black_and_white_points():
    _, frames = read_y4m_bytes(_y4m_444(0, 128, 128))
    assert np.allclose(frames[0].rgb, 0.0, atol=1e-12)
    _, frames = read_y4m_bytes(_y4m_444(255, 128, 128))
    assert np.allclose(frames[0].rgb, 1.0, atol=1e-12)


def test_header_only_stream_is_empty():
    info, frames = read_y4m_bytes(b"YUV4MPEG2 W2 H2 F1:1 C444\n")
    assert frames == []


def test_truncated_and_bad_marker():
    data = _y4m_444(10, 128, 128)
    with pytest.raises(TruncatedFrame):
        read_y4m_bytes(data[:-1])
    with pytest.raises(MalformedFrameMarker):
        read_y4m_bytes(data.replace(b"FRAME\n", b"FRAMX\n"))


def test_420_chroma_replication():
    # 4x2 luma, 2x1 chroma: left chroma sample red-shifted, right neutral
    y = bytes([128] * 8)
    u = bytes([128, 128])
    v = bytes([255, 128])
    data = b"YUV4MPEG2 W4 H2 F30:1 C420\nFRAME\n" + y + u + v
    _, (f,) = read_y4m_bytes(data)
    assert np.all(f.rgb[:, :2, 0] > f.rgb[:, 2:, 0])
    assert np.allclose(f.rgb[:, 2:], 128 / 255)


def test_y4m_round_trip_and_timestamps(tmp_path):
    arrays = [texture(s, 8, 10) for s in range(4)]
    path = tmp_path / "v.y4m"
    with open(path, "wb") as fh:
        write_y4m(fh, frames_from_arrays(arrays), fps=(30000, 1001))
    info, frames = load_video(path)
    assert [f.index for f in frames] == [0, 1, 2, 3]
    assert np.all(np.diff([f.timestamp for f in frames]) > 0)
    assert frames[1].timestamp == pytest.approx(1001 / 30000)
    # YUV quantization costs a few code values at most
    for a, f in zip(arrays, frames):
        assert np.max(np.abs(a - f.rgb)) < 4 / 255
    again = load_video(path)[1]
    assert all(np.array_equal(a.rgb, b.rgb) for a, b in zip(frames, again))


def test_raw_and_imagedir_sources(tmp_path):
    px = (np.arange(2 * 3 * 4 * 3) % 256).astype(np.uint8).reshape(2, 3, 4, 3)
    raw = tmp_path / "v.rgb"
    raw.write_bytes(px.tobytes())
    info, frames = load_video(raw, "raw", width=4, height=3, fps="25")
    assert len(frames) == 2 and info.colorspace is Colorspace.RGB24
    assert np.array_equal(frames[1].rgb, px[1] / 255.0)
    raw.write_bytes(px.tobytes()[:-1])
    with pytest.raises(TruncatedFrame):
        load_video(raw, "raw", width=4, height=3, fps="25")

    d = tmp_path / "imgs"
    d.mkdir()
    for name, i in (("b.ppm", 1), ("a.ppm", 0)):
        write_ppm(d / name, px[i] / 255.0)
    _, frames = load_video(d)
    assert [np.array_equal(f.rgb, px[i] / 255.0) for i, f in enumerate(frames)] == [True, True]
    assert np.array_equal(read_image(d / "a.ppm"), px[0] / 255.0)


def test_frames_are_immutable():
    f = solid((0.2, 0.4, 0.6))
    with pytest.raises(ValueError):
        f.rgb[0, 0, 0] = 1.0
    with pytest.raises(DimensionMismatch):
        make_frame(np.zeros((4, 4)))


@pytest.mark.parametrize("color,gray", [((1, 1, 1), 1.0), ((1, 0, 0), 0.2126), ((0, 0, 1), 0.0722)])
def test_gray_weights(color, gray):
    assert np.allclose(to_gray(solid(color)).gray, gray, rtol=0, atol=1e-15)


@pytest.mark.parametrize("color,hsv", [((1, 0, 0), (0, 1, 1)), ((0.5, 0.5, 0.5), (0, 0, 0.5)),
                                       ((0, 1, 0), (1 / 3, 1, 1))])
def test_hsv_examples(color, hsv):
    out = to_hsv(solid(color, 2, 2))
    assert np.allclose([out.h[0, 0], out.s[0, 0], out.v[0, 0]], hsv, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5, 3), elements=st.floats(0, 1)), st.floats(0, 1))
def test_gray_is_linear(rgb, alpha):
    f = make_frame(rgb)
    assert np.allclose(to_gray(make_frame(alpha * rgb)).gray, alpha * to_gray(f).gray, atol=1e-12)


def test_hsv_round_trip_1000_pixels(rng):
    rgb = rng.uniform(size=(1000, 1, 3))
    h, s, v = rgb_to_hsv(rgb)
    assert np.all((h >= 0) & (h < 1))
    assert np.max(np.abs(hsv_to_rgb(h, s, v) - rgb)) <= 1e-6

import json
import re
import struct

import numpy as np
import pytest

from mostdet import io
from mostdet.io import FormatError
from mostdet.labelgen import TextInstance
from mostdet.nms import Detections, QuadBox


def rect(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


class TestTensor:
    def test_round_trip(self, tmp_path):
        a = np.random.default_rng(0).standard_normal((160, 160, 5)).astype(np.float32)
        io.write_tensor(tmp_path / "g.mtt", a)
        b = io.read_tensor(tmp_path / "g.mtt", (160, 160, 5))
        assert b.dtype == np.float32
        assert a.tobytes() == b.tobytes()

    def test_header_layout(self):
        blob = io.encode_tensor(np.zeros((2, 3)))
        assert blob[:8] == b"MOSTTNSR"
        assert struct.unpack_from("<IIIII", blob, 8) == (1, 2, 2, 3, 0)
        assert len(blob) == 8 + 5 * 4 + 6 * 4

    def test_truncated(self):
        blob = io.encode_tensor(np.ones((4, 4)))
        with pytest.raises(FormatError, match="payload size mismatch"):
            io.decode_tensor(blob[:-3])

    def test_wrong_magic(self):
        blob = io.encode_tensor(np.ones(3))
        with pytest.raises(FormatError, match="not a tensor file"):
            io.decode_tensor(b"NOTATNSR" + blob[8:])

    def test_bad_version_and_dtype(self):
        blob = bytearray(io.encode_tensor(np.ones(3)))
        v = bytes(blob)
        blob[8] = 2
        with pytest.raises(FormatError, match="version"):
            io.decode_tensor(bytes(blob))
        d = bytearray(v)
        d[20] = 1
        with pytest.raises(FormatError, match="dtype"):
            io.decode_tensor(bytes(d))

    def test_shape_check(self):
        blob = io.encode_tensor(np.ones((4, 4, 5)))
        assert io.decode_tensor(blob, (4, None, 5)).shape == (4, 4, 5)
        with pytest.raises(FormatError, match="shape"):
            io.decode_tensor(blob, (4, 4, 4))


class TestIcdar:
    def test_plain(self):
        (g,) = io.parse_icdar_gt("0,0,10,0,10,5,0,5,hello")
        np.testing.assert_array_equal(g.quad, rect(0, 0, 10, 5))
        assert not g.dont_care and g.text == "hello"

    def test_dont_care(self):
        assert io.parse_icdar_gt("0,0,10,0,10,5,0,5,###")[0].dont_care

    def test_bad_coordinate(self):
        with pytest.raises(FormatError, match="line 2: non-numeric"):
            io.parse_icdar_gt(["0,0,10,0,10,5,0,5,a", "0,0,10,0,abc,5,0,5,x"])

    def test_too_few_fields(self):
        with pytest.raises(FormatError, match="line 1"):
            io.parse_icdar_gt("0,0,10,0,10,5,0")

    def test_bom_blank_lines_and_commas(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_bytes("\ufeff0,0,10,0,10,5,0,5,a,b\n\n  \n20,20,30,20,30,25,20,25,###\n".encode())
        gts = io.read_icdar_gt(p)
        assert [g.text for g in gts] == ["a,b", "###"]

    def test_vertex_reordering(self):
        (g,) = io.parse_icdar_gt("10,5,0,5,0,0,10,0,x")
        np.testing.assert_array_equal(g.quad, rect(0, 0, 10, 5))


class TestDetectionJson:
    def test_round_trip(self, tmp_path):
        d = Detections([rect(0, 0, 4, 2), rect(5, 5, 9, 7)], [0.9, 1.7], [[0.1, 0.2, 0.3, 0.4]] * 2)
        io.write_detections(tmp_path / "d.json", d)
        back = io.read_detections(tmp_path / "d.json")
        np.testing.assert_array_equal(back.quads, d.quads)
        np.testing.assert_array_equal(back.scores, d.scores)
        np.testing.assert_array_equal(back.weights, d.weights)
        rec = json.loads((tmp_path / "d.json").read_text())[0]
        assert set(rec) == {"points", "score", "weights"} and set(rec["weights"]) == set("lrtb")

    def test_empty(self):
        assert len(io.records_to_detections([])) == 0

    @pytest.mark.parametrize("bad", [{}, [{"points": [[0, 0]] * 3, "score": 1}],
                                     [{"points": [[0, 0]] * 4}]])
    def test_malformed(self, bad):
        with pytest.raises(FormatError):
            io.records_to_detections(bad)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "d.json").write_text("[{")
        with pytest.raises(FormatError, match="invalid JSON"):
            io.read_detections(tmp_path / "d.json")


class TestSvg:
    def test_empty(self):
        svg = io.render_svg((100, 200), [])
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "<polygon" not in svg and 'class="canvas"' in svg

    def test_one_detection(self):
        svg = io.render_svg((100, 200), [QuadBox(rect(1, 2, 30, 12), 0.9)])
        polys = re.findall(r'<polygon class="det" points="([^"]+)"', svg)
        assert len(polys) == 1 and len(polys[0].split()) == 4

    def test_colors_follow_matching(self):
        gts = [TextInstance(rect(0, 0, 50, 10))]
        dets = [QuadBox(rect(0, 0, 50, 10), 0.9), QuadBox(rect(100, 100, 120, 110), 0.8)]
        svg = io.render_svg((200, 200), dets, gts)
        strokes = re.findall(r'class="det"[^>]*stroke="(\w+)"', svg)
        assert strokes == ["green", "red"]
        assert svg.count('class="gt"') == 1

    def test_deterministic(self):
        dets = [QuadBox(rect(0, 0, 50, 10), 0.9)]
        assert io.render_svg((64, 64), dets) == io.render_svg((64, 64), dets)

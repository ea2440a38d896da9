import math

import pytest

from dualshot.anchors import (
    RATIO,
    SECOND_SHOT_SCALES,
    STRIDES,
    LevelSpec,
    anchor_shape,
    build_grid,
    default_level_specs,
    make_level_specs,
    total_anchor_count,
)


class TestLevelSpecs:
    def test_table_at_640(self):
        specs = default_level_specs(640)
        assert [s.stride for s in specs] == [4, 8, 16, 32, 64, 128]
        assert [(s.map_h, s.map_w) for s in specs] == [
            (160, 160), (80, 80), (40, 40), (20, 20), (10, 10), (5, 5)]
        assert [s.count() for s in specs] == [25600, 6400, 1600, 400, 100, 25]
        assert [s.scale_second_shot for s in specs] == [16, 32, 64, 128, 256, 512]
        assert [s.scale_first_shot for s in specs] == [8, 16, 32, 64, 128, 256]
        assert total_anchor_count(specs) == 34125

    def test_total_both_shots_at_640(self):
        specs = default_level_specs(640)
        n = sum(len(build_grid(s, shot).boxes) for s in specs for shot in ("first", "second"))
        assert n == 2 * 34125 == 68250

    def test_input_128(self):
        specs = default_level_specs(128)
        assert [s.map_h for s in specs] == [32, 16, 8, 4, 2, 1]
        assert total_anchor_count(specs) == 32 * 32 + 16 * 16 + 8 * 8 + 4 * 4 + 2 * 2 + 1

    def test_non_divisible_rejected(self):
        for bad in (100, 630, 65):
            with pytest.raises(ValueError):
                default_level_specs(bad)

    def test_ceil_division_at_160(self):
        # 160/64 and 160/128 do not divide evenly; maps round up
        specs = make_level_specs(160)
        assert [s.map_h for s in specs] == [40, 20, 10, 5, 3, 2]

    def test_make_level_specs_matches_default_when_divisible(self):
        assert make_level_specs(640) == default_level_specs(640)

    def test_stride_doubles_per_level(self):
        specs = default_level_specs(640)
        for s in specs:
            assert s.stride == 4 * 2 ** (s.index - 1)

    def test_first_shot_scale_must_be_half(self):
        with pytest.raises(ValueError):
            LevelSpec(index=1, stride=4, map_h=8, map_w=8,
                      scale_second_shot=16.0, scale_first_shot=10.0)

    def test_rejects_nonpositive_maps(self):
        with pytest.raises(ValueError):
            LevelSpec(index=1, stride=4, map_h=0, map_w=8,
                      scale_second_shot=16.0, scale_first_shot=8.0)


class TestAnchorShape:
    def test_scale_is_width(self):
        w, h = anchor_shape(16.0)
        assert (w, h) == (16.0, 24.0)
        assert h / w == RATIO

    def test_area_preserving(self):
        w, h = anchor_shape(16.0, area_preserving=True)
        assert h / w == pytest.approx(RATIO)
        assert math.sqrt(w * h) == pytest.approx(16.0)


class TestBuildGrid:
    def test_level6_second_shot(self):
        spec = default_level_specs(640)[5]
        grid = build_grid(spec, "second")
        assert len(grid.boxes) == 25
        for b in grid.boxes:
            assert (b.w, b.h) == (512.0, 768.0)

    def test_level1_first_cell(self):
        spec = default_level_specs(640)[0]
        b = build_grid(spec, "second").boxes[0]
        assert (b.cx, b.cy) == (2.0, 2.0)
        assert (b.x, b.y, b.w, b.h) == (-6.0, -10.0, 16.0, 24.0)

    def test_first_shot_same_centers_half_dims(self):
        spec = default_level_specs(640)[2]
        first = build_grid(spec, "first").boxes
        second = build_grid(spec, "second").boxes
        assert len(first) == len(second)
        for f, s in zip(first, second):
            assert (f.cx, f.cy) == (s.cx, s.cy)
            assert f.w == s.w / 2.0 and f.h == s.h / 2.0
            assert f.area == pytest.approx(s.area / 4.0)

    def test_centers_follow_stride(self):
        spec = default_level_specs(640)[1]
        boxes = build_grid(spec, "second").boxes
        for idx, b in enumerate(boxes):
            i, j = divmod(idx, spec.map_w)
            assert b.cx == (j + 0.5) * spec.stride
            assert b.cy == (i + 0.5) * spec.stride

    def test_aspect_is_uniform(self):
        for spec in default_level_specs(640):
            for shot in ("first", "second"):
                for b in build_grid(spec, shot).boxes[:3]:
                    assert b.h / b.w == RATIO

    def test_scales_cover_16_to_512(self):
        assert SECOND_SHOT_SCALES == (16.0, 32.0, 64.0, 128.0, 256.0, 512.0)
        assert STRIDES == (4, 8, 16, 32, 64, 128)

    def test_bad_shot_rejected(self):
        spec = default_level_specs(640)[0]
        with pytest.raises(ValueError):
            build_grid(spec, "third")

import json

import numpy as np
import pytest

from zebrasynth.dataset import (
    Annotation,
    DatasetError,
    DatasetManifest,
    ImageRecord,
    load_manifest,
    read_annotations,
    read_coco,
    save_manifest,
    split_dataset,
    write_coco,
    write_yolo,
)
from zebrasynth.evaluation import Detection


def make_manifest(n_images=3, width=100, height=100):
    images = [
        ImageRecord(image_id=f"img{k:03d}", file_name=f"img{k:03d}.png", width=width, height=height)
        for k in range(n_images)
    ]
    return DatasetManifest(name="test", images=images, split={})


class TestSplitDataset:
    def test_table_sizes(self):
        images = list(range(36000))
        train, val = split_dataset(images, 0.8, np.random.default_rng(0))
        assert len(train) == 28800
        assert len(val) == 7200

    def test_tiny(self):
        train, val = split_dataset(list(range(5)), 0.8, np.random.default_rng(1))
        assert len(train) == 4 and len(val) == 1

    def test_disjoint_cover_deterministic(self):
        images = [f"i{k}" for k in range(257)]
        a = split_dataset(images, 0.8, np.random.default_rng(2))
        b = split_dataset(images, 0.8, np.random.default_rng(2))
        assert a == b
        train, val = a
        assert set(train) | set(val) == set(images)
        assert set(train) & set(val) == set()

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            split_dataset([], 0.8, np.random.default_rng(0))

    def test_bad_ratio_rejected(self):
        with pytest.raises(DatasetError):
            split_dataset([1], 1.0, np.random.default_rng(0))


class TestCoco:
    def test_empty_dataset_valid_json(self, tmp_path):
        manifest = DatasetManifest(name="empty", images=[], split={})
        write_coco(manifest, [], tmp_path / "gt.json")
        doc = json.loads((tmp_path / "gt.json").read_text())
        assert doc["images"] == [] and doc["annotations"] == []
        assert doc["categories"] == [{"id": 1, "name": "zebra"}]

    def test_bbox_field_exact(self, tmp_path):
        manifest = make_manifest(1)
        ann = Annotation("img000", 10.0, 20.0, 30.0, 40.0)
        write_coco(manifest, [ann], tmp_path / "gt.json")
        doc = json.loads((tmp_path / "gt.json").read_text())
        assert doc["annotations"][0]["bbox"] == [10.0, 20.0, 30.0, 40.0]
        assert doc["annotations"][0]["category_id"] == 1
        assert doc["annotations"][0]["iscrowd"] == 0

    def test_round_trip(self, tmp_path):
        manifest = make_manifest(4, width=640, height=480)
        rng = np.random.default_rng(3)
        anns = []
        for k in range(25):
            x = float(rng.uniform(0, 600))
            y = float(rng.uniform(0, 440))
            anns.append(
                Annotation(
                    f"img{int(rng.integers(0, 4)):03d}",
                    x, y,
                    float(rng.uniform(1, 640 - x)),
                    float(rng.uniform(1, 480 - y)),
                )
            )
        write_coco(manifest, anns, tmp_path / "gt.json")
        images, back = read_coco(tmp_path / "gt.json")
        assert [(i.image_id, i.width, i.height) for i in images] == [
            (r.image_id, r.width, r.height) for r in manifest.images
        ]
        assert [(a.image_id, a.x, a.y, a.w, a.h) for a in back] == [
            (a.image_id, a.x, a.y, a.w, a.h) for a in anns
        ]

    def test_annotation_ids_unique(self, tmp_path):
        manifest = make_manifest(2)
        anns = [Annotation("img000", 1, 1, 5, 5), Annotation("img001", 2, 2, 6, 6)]
        write_coco(manifest, anns, tmp_path / "gt.json")
        doc = json.loads((tmp_path / "gt.json").read_text())
        ids = [a["id"] for a in doc["annotations"]]
        assert len(set(ids)) == len(ids)

    def test_unknown_image_rejected(self, tmp_path):
        with pytest.raises(DatasetError):
            write_coco(make_manifest(1), [Annotation("nope", 0, 0, 1, 1)], tmp_path / "x.json")

    def test_out_of_bounds_clamped_or_strict(self, tmp_path):
        doc = {
            "images": [{"id": "a", "file_name": "a.png", "width": 100, "height": 100}],
            "annotations": [
                {"id": 1, "image_id": "a", "bbox": [90.0, 90.0, 30.0, 30.0], "category_id": 1}
            ],
            "categories": [{"id": 1, "name": "zebra"}],
        }
        p = tmp_path / "gt.json"
        p.write_text(json.dumps(doc))
        _, anns = read_coco(p)
        assert anns[0].xyxy == (90.0, 90.0, 100.0, 100.0)
        with pytest.raises(DatasetError):
            read_coco(p, strict=True)

    def test_malformed_json_named(self, tmp_path):
        p = tmp_path / "gt.json"
        p.write_text("{broken")
        with pytest.raises(DatasetError):
            read_coco(p)

    def test_missing_bbox_field_named(self, tmp_path):
        doc = {
            "images": [{"id": "a", "width": 10, "height": 10}],
            "annotations": [{"id": 1, "image_id": "a"}],
        }
        p = tmp_path / "gt.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(DatasetError, match="annotations\\[0\\]"):
            read_coco(p)


class TestYolo:
    def test_line_format_exact(self, tmp_path):
        manifest = DatasetManifest(
            name="t",
            images=[ImageRecord("img0", "img0.png", 100, 200)],
            split={},
        )
        ann = Annotation("img0", 10.0, 20.0, 30.0, 40.0)
        out = write_yolo(manifest, [ann], tmp_path / "labels")
        text = (out / "img0.txt").read_text()
        assert text == "0 0.250000 0.200000 0.300000 0.200000\n"

    def test_empty_image_gets_empty_file(self, tmp_path):
        manifest = make_manifest(2)
        write_yolo(manifest, [Annotation("img000", 1, 1, 5, 5)], tmp_path / "labels")
        assert (tmp_path / "labels" / "img001.txt").read_text() == ""

    def test_round_trip_within_quantization(self, tmp_path):
        manifest = make_manifest(3, width=640, height=480)
        rng = np.random.default_rng(4)
        anns = []
        for _ in range(40):
            x = float(rng.uniform(0, 600))
            y = float(rng.uniform(0, 440))
            anns.append(
                Annotation(
                    f"img{int(rng.integers(0, 3)):03d}",
                    x, y,
                    float(rng.uniform(1, 640 - x)),
                    float(rng.uniform(1, 480 - y)),
                )
            )
        out = write_yolo(manifest, anns, tmp_path / "labels")
        back = read_annotations(out, "yolo", image_sizes=(640, 480))
        by_img = {}
        for a in back:
            by_img.setdefault(a.image_id, []).append(a)
        for ann in anns:
            stem = ann.image_id
            match = min(
                by_img[stem],
                key=lambda b: abs(b.x - ann.x) + abs(b.y - ann.y),
            )
            # 6-decimal normalized quantization: half a step is 0.5e-6 of
            # the image side, far below the 1e-4 px tolerance... scaled up.
            assert abs(match.x - ann.x) < 1e-3
            assert abs(match.y - ann.y) < 1e-3
            assert abs(match.w - ann.w) < 1e-3
            assert abs(match.h - ann.h) < 1e-3

    def test_detection_confidence_field(self, tmp_path):
        d = tmp_path / "preds"
        d.mkdir()
        (d / "img0.txt").write_text("0 0.5 0.5 0.1 0.1 0.87\n")
        dets = read_annotations(d, "yolo", image_sizes=(100, 100), detections=True)
        assert len(dets) == 1
        assert dets[0].confidence == 0.87
        assert dets[0].box == (45.0, 45.0, 55.0, 55.0)

    def test_four_fields_rejected_with_line(self, tmp_path):
        d = tmp_path / "preds"
        d.mkdir()
        (d / "bad.txt").write_text("0 0.5 0.5 0.1\n")
        with pytest.raises(DatasetError, match="bad.txt:1"):
            read_annotations(d, "yolo", image_sizes=(100, 100))

    def test_yolo_requires_sizes(self, tmp_path):
        with pytest.raises(DatasetError):
            read_annotations(tmp_path, "yolo")


class TestDetectionReaders:
    def test_coco_results_list(self, tmp_path):
        p = tmp_path / "res.json"
        p.write_text(
            json.dumps(
                [{"image_id": "a", "bbox": [10, 10, 20, 20], "score": 0.9, "category_id": 1}]
            )
        )
        dets = read_annotations(p, "coco", detections=True)
        assert dets == [Detection("a", (10.0, 10.0, 30.0, 30.0), 0.9)]

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DatasetError):
            read_annotations(tmp_path, "voc")


class TestManifest:
    def test_round_trip_with_split(self, tmp_path):
        manifest = make_manifest(6)
        train, val = split_dataset(manifest.images, 0.8, np.random.default_rng(5))
        manifest.split = {r.image_id: "train" for r in train}
        manifest.split.update({r.image_id: "val" for r in val})
        manifest.seed = 5
        manifest.config_digest = "abc123"
        save_manifest(manifest, tmp_path / "m.json")
        back = load_manifest(tmp_path / "m.json")
        assert back.split == manifest.split
        assert back.seed == 5
        assert len(back.subset("train")) == 5
        assert len(back.subset("val")) == 1
        assert set(back.subset("train")) & set(back.subset("val")) == set()

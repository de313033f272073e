"""Dataset manifests: YAML files listing expression sequences and their metadata.

Example::

    dataset: snap2dfe
    root: frames/               # optional, relative to the manifest
    source_resolution: [780, 580]
    sequences:
      - id: s01_happiness_yaw_cam1
        subject: s01
        expression: happiness
        pose_category: yaw
        camera: constrained     # frontal | constrained | unconstrained
        frames: [s01/cam1/000.png, s01/cam1/001.png]
        boxes: [120, 40, 300, 300]   # one box, or one per frame
      - id: s01_happiness_yaw_cam2
        pair: s01_happiness_yaw_cam1
        camera: unconstrained
        ...
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

from ..errors import DataError
from ..flowcore import ExpressionLabel, FaceFrame, read_image

POSE_CATEGORIES = ("yaw", "pitch", "roll", "diagonal", "nothing", "Tx")
CAMERA_ROLES = ("frontal", "constrained", "unconstrained")
_SEQ_KEYS = {"id", "subject", "expression", "pose_category", "camera", "pair", "frames", "boxes"}
_TOP_KEYS = {"dataset", "root", "source_resolution", "sequences"}


@dataclass
class Sequence:
    seq_id: str
    dataset: str
    subject_id: str
    expression: ExpressionLabel
    pose_category: str = "nothing"
    camera: str = "frontal"
    frame_paths: List[Path] = field(default_factory=list)
    boxes: List[Tuple[int, int, int, int]] = field(default_factory=list)
    pair_id: Optional[str] = None
    line: Optional[int] = None
    frames: Optional[List[FaceFrame]] = None

    def __len__(self) -> int:
        return len(self.frames) if self.frames is not None else len(self.frame_paths)

    def load_frames(self) -> List[FaceFrame]:
        if self.frames is None:
            self.frames = [self._read(i, p) for i, p in enumerate(self.frame_paths)]
        return self.frames

    def _read(self, index: int, path: Path) -> FaceFrame:
        box = None
        if self.boxes:
            box = self.boxes[0] if len(self.boxes) == 1 else self.boxes[index]
        expr = ExpressionLabel.NEUTRAL if index == 0 else self.expression
        return FaceFrame(read_image(path), subject_id=self.subject_id, expression=expr, crop_box=box,
                         meta={"path": str(path), "index": index})

    def box_for(self, index: int):
        if not self.boxes:
            return None
        return self.boxes[0] if len(self.boxes) == 1 else self.boxes[index]


@dataclass
class Dataset:
    name: str
    sequences: List[Sequence] = field(default_factory=list)
    errors: List[Tuple[str, Optional[int], str]] = field(default_factory=list)
    source_resolution: Optional[Tuple[int, int]] = None

    @property
    def flagged(self) -> set:
        return {seq_id for seq_id, _, _ in self.errors}

    def by_id(self) -> Dict[str, Sequence]:
        return {s.seq_id: s for s in self.sequences}

    def __len__(self) -> int:
        return len(self.sequences)


def _located(node, message: str) -> DataError:
    line = node.start_mark.line + 1 if node is not None else "?"
    return DataError(f"line {line}: {message}")


def _parse_box(raw, node) -> Tuple[int, int, int, int]:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4 and all(isinstance(x, (int, float)) for x in raw)):
        raise _located(node, f"box must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (int(round(c)) for c in raw)
    if w <= 0 or h <= 0:
        raise _located(node, f"box has nonpositive size: {raw!r}")
    return x, y, w, h


def _value_nodes(mapping_node) -> Dict[str, yaml.Node]:
    return {k.value: v for k, v in mapping_node.value} if isinstance(mapping_node, yaml.MappingNode) else {}


def load_dataset(manifest) -> Dataset:
    """Parse a manifest; schema problems raise ``DataError`` with the offending line.

    Sequences whose frame files are missing are kept out of ``sequences`` and
    listed in ``errors`` instead.
    """
    path = Path(manifest)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    text = path.read_text()
    try:
        root_node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise DataError(f"{path}: {where}malformed manifest ({getattr(exc, 'problem', exc)})") from None
    if data is None:
        return Dataset(name=path.stem)
    if not isinstance(data, dict):
        raise DataError(f"{path}: line 1: manifest must be a mapping")
    top_nodes = _value_nodes(root_node)
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise _located(top_nodes.get(sorted(unknown)[0]), f"unknown manifest key(s): {sorted(unknown)}")
    name = str(data.get("dataset", path.stem))
    base = path.parent / str(data.get("root", "."))
    res = data.get("source_resolution")
    if res is not None and not (isinstance(res, list) and len(res) == 2):
        raise _located(top_nodes.get("source_resolution"), "source_resolution must be [width, height]")
    dataset = Dataset(name=name, source_resolution=tuple(res) if res else None)

    entries = data.get("sequences") or []
    seq_nodes = top_nodes.get("sequences")
    seq_nodes = seq_nodes.value if isinstance(seq_nodes, yaml.SequenceNode) else []
    if not isinstance(entries, list):
        raise _located(top_nodes.get("sequences"), "sequences must be a list")

    seen = set()
    for i, entry in enumerate(entries):
        node = seq_nodes[i] if i < len(seq_nodes) else None
        fields = _value_nodes(node)
        if not isinstance(entry, dict):
            raise _located(node, "sequence entry must be a mapping")
        bad = set(entry) - _SEQ_KEYS
        if bad:
            raise _located(fields.get(sorted(bad)[0], node), f"unknown sequence key(s): {sorted(bad)}")
        for key in ("id", "subject", "expression", "frames"):
            if key not in entry:
                raise _located(node, f"sequence is missing required key {key!r}")
        seq_id = str(entry["id"])
        if seq_id in seen:
            raise _located(fields.get("id"), f"duplicate sequence id {seq_id!r}")
        seen.add(seq_id)
        try:
            expression = ExpressionLabel.parse(entry["expression"])
        except DataError as exc:
            raise _located(fields.get("expression"), str(exc)) from None
        pose = str(entry.get("pose_category", "nothing"))
        if pose not in POSE_CATEGORIES:
            raise _located(fields.get("pose_category"), f"pose_category must be one of {POSE_CATEGORIES}")
        camera = str(entry.get("camera", "frontal"))
        if camera not in CAMERA_ROLES:
            raise _located(fields.get("camera"), f"camera must be one of {CAMERA_ROLES}")
        frames = entry["frames"]
        if not isinstance(frames, list) or not all(isinstance(f, str) for f in frames):
            raise _located(fields.get("frames"), "frames must be a list of paths")
        boxes_raw = entry.get("boxes")
        boxes = []
        if boxes_raw is not None:
            if boxes_raw and isinstance(boxes_raw[0], (list, tuple)):
                boxes = [_parse_box(b, fields.get("boxes")) for b in boxes_raw]
                if len(boxes) != len(frames):
                    raise _located(fields.get("boxes"), "need one box per frame or a single box")
            else:
                boxes = [_parse_box(boxes_raw, fields.get("boxes"))]
        if camera == "unconstrained" and "pair" not in entry:
            raise _located(node, "unconstrained sequence needs a 'pair' naming its constrained twin")
        seq = Sequence(
            seq_id=seq_id, dataset=name, subject_id=str(entry["subject"]), expression=expression,
            pose_category=pose, camera=camera, frame_paths=[base / f for f in frames], boxes=boxes,
            pair_id=str(entry["pair"]) if "pair" in entry else None, line=node.start_mark.line + 1 if node else None,
        )
        missing = [str(p) for p in seq.frame_paths if not p.exists()]
        if missing:
            dataset.errors.append((seq_id, seq.line, f"missing frame(s): {', '.join(missing)}"))
            continue
        dataset.sequences.append(seq)

    declared = {str(e.get("id")) for e in entries if isinstance(e, dict)}
    usable = {s.seq_id for s in dataset.sequences}
    for seq in list(dataset.sequences):
        if seq.pair_id is not None and seq.pair_id not in usable:
            why = "has missing frames" if seq.pair_id in declared else "not found in manifest"
            dataset.errors.append((seq.seq_id, seq.line, f"pair {seq.pair_id!r} {why}"))
            dataset.sequences.remove(seq)
    return dataset


def dump_manifest(path, dataset_name: str, sequences: List[dict], source_resolution=None, root=None) -> Path:
    doc = {"dataset": dataset_name}
    if root is not None:
        doc["root"] = str(root)
    if source_resolution is not None:
        doc["source_resolution"] = list(source_resolution)
    doc["sequences"] = sequences
    path = Path(path)
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path

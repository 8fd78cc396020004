"""Detection files: one .txt per image, lines "class score cx cy w h" (normalized geometry).

Boxes stay in normalized coordinates (image treated as 1 x 1). IoU is
invariant to per-axis scaling, so suppression and matching need no image size.
"""

from pathlib import Path
from typing import Dict, List, Sequence, Union

from src.dataset_loader import parse_yolo_boxes
from src.frames import BoundingBox, Detection, LabeledBox


def parse_detections(text: str, source: str = "<string>") -> List[Detection]:
    detections = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        where = f"{source}:{lineno}"
        if len(tokens) != 6:
            raise ValueError(f"{where}: expected 6 fields 'class score cx cy w h', got {len(tokens)}")
        try:
            class_id = int(tokens[0])
            score, cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError:
            raise ValueError(f"{where}: non-numeric token in {line.strip()!r}") from None
        if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise ValueError(f"{where}: coordinate out of range [0, 1]")
        try:
            detections.append(Detection(BoundingBox.from_center(cx, cy, w, h), score, class_id))
        except ValueError as e:
            raise ValueError(f"{where}: {e}") from None
    return detections


def format_detections(detections: Sequence[Detection]) -> str:
    lines = []
    for d in detections:
        cx, cy, w, h = d.box.to_center()
        lines.append(f"{d.class_id} {d.score:.10g} {cx:.10g} {cy:.10g} {w:.10g} {h:.10g}")
    return "".join(line + "\n" for line in lines)


def read_detection_file(path: Union[str, Path]) -> List[Detection]:
    path = Path(path)
    return parse_detections(path.read_text(encoding="utf-8"), source=str(path))


def write_detection_file(detections: Sequence[Detection], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_detections(detections))
    return path


def read_ground_truth_file(path: Union[str, Path]) -> List[LabeledBox]:
    """YOLO ground-truth file in normalized coordinates."""
    path = Path(path)
    try:
        return parse_yolo_boxes(path.read_text(encoding="utf-8"), 1.0, 1.0)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None


def list_box_files(directory: Union[str, Path]) -> Dict[str, Path]:
    """Map image id (file stem) -> .txt path, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Directory not found: {directory}")
    return {p.stem: p for p in sorted(directory.glob("*.txt"))}

"""Dataset harness: hierarchical annotation loading, validation, statistics.

Expected tree:
    root/images/<group>/<name>.jpg|png        (optional for GT-only work)
    root/gt_object/<group>/<name>.png
    root/gt_instance/<group>/<name>.png       (optional)
    root/bboxes/<group>/<name>.txt            (optional; "label x0 y0 x1 y1")
    root/taxonomy.tsv                         (group <TAB> super_class)

Faulty images are skipped with a validation entry, never fatally: a benchmark
harness has to degrade gracefully on imperfect mirrors of the data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CosalError, LabelMask, load_label_mask, resize_bilinear

MAX_INSTANCES = 6
MEAN_MASK_CANVAS = 256
SIZE_HISTOGRAM_BINS = 10


@dataclass
class ImageRecord:
    name: str
    image_path: Path | None
    object_gt_path: Path
    instance_gt_path: Path | None
    bboxes: list[tuple[int, int, int, int, int]]  # (label, x0, y0, x1, y1) inclusive
    height: int
    width: int
    fg_pixels: int
    instance_sizes: list[float]  # per-instance foreground ratio, [] without instance gt
    content_key: str  # digest of the object mask content; rename-stable identity


@dataclass
class GroupRecord:
    group_id: str
    super_class: str
    images: list[ImageRecord]


@dataclass
class ValidationIssue:
    group: str
    image: str
    message: str


@dataclass
class DatasetIndex:
    root: Path
    groups: list[GroupRecord]
    issues: list[ValidationIssue]
    taxonomy: dict[str, str]

    @property
    def n_images(self) -> int:
        return sum(len(g.images) for g in self.groups)


@dataclass
class DatasetStats:
    n_groups: int
    n_images: int
    n_instances: int
    instance_count_histogram: dict[str, int]  # keys "1", "2", "3+"
    instance_size_min: float
    instance_size_max: float
    instance_size_mean: float
    instance_size_histogram: list[int]  # SIZE_HISTOGRAM_BINS uniform bins on [0, 1]
    per_super_class: dict[str, dict[str, int]]  # name -> {subclasses, images}
    mean_fg_ratio: float
    notes: list[str] = field(default_factory=list)


def _load_taxonomy(root: Path):
    path = root / "taxonomy.tsv"
    taxonomy = {}
    if path.exists():
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) >= 2:
                taxonomy[parts[0]] = parts[1]
    return taxonomy


def _find_image(images_dir: Path, group: str, stem: str):
    for ext in (".jpg", ".jpeg", ".png"):
        cand = images_dir / group / (stem + ext)
        if cand.exists():
            return cand
    return None


def _tight_boxes(mask: LabelMask):
    boxes = []
    labels = mask.labels
    for k in range(1, mask.n_instances + 1):
        rows, cols = np.nonzero(labels == k)
        boxes.append((k, int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())))
    return boxes


def _parse_bbox_file(path: Path):
    boxes = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{ln}: expected 'label x0 y0 x1 y1'")
        boxes.append(tuple(int(p) for p in parts))
    return boxes


def load_dataset(root) -> DatasetIndex:
    """Index and validate a dataset tree; offending images are skipped."""
    root = Path(root)
    gt_dir = root / "gt_object"
    if not gt_dir.is_dir():
        raise CosalError(f"{root}: missing gt_object directory")
    group_names = sorted(p.name for p in gt_dir.iterdir() if p.is_dir())
    if not group_names:
        raise CosalError(f"{root}: no groups under gt_object")

    taxonomy = _load_taxonomy(root)
    images_dir = root / "images"
    inst_dir = root / "gt_instance"
    bbox_dir = root / "bboxes"
    issues: list[ValidationIssue] = []
    groups: list[GroupRecord] = []

    for group in group_names:
        records = []
        for gt_path in sorted((gt_dir / group).glob("*.png")):
            stem = gt_path.stem
            try:
                obj = load_label_mask(gt_path)
            except Exception as exc:
                issues.append(ValidationIssue(group, stem, f"malformed object gt: {exc}"))
                continue
            binary = obj.binary()

            image_path = _find_image(images_dir, group, stem) if images_dir.is_dir() else None
            if images_dir.is_dir() and (images_dir / group).is_dir() and image_path is None:
                issues.append(ValidationIssue(group, stem, "missing image file"))

            instance_path = inst_dir / group / (stem + ".png")
            instance = None
            if instance_path.exists():
                try:
                    instance = load_label_mask(instance_path)
                except Exception as exc:
                    issues.append(ValidationIssue(group, stem, f"malformed instance gt: {exc}"))
                    continue
                if instance.shape != obj.shape:
                    issues.append(ValidationIssue(group, stem, "instance/object shape mismatch"))
                    continue
                if not np.array_equal(instance.binary(), binary):
                    issues.append(ValidationIssue(group, stem, "instance/object support mismatch"))
                    continue
                if instance.n_instances > MAX_INSTANCES:
                    issues.append(
                        ValidationIssue(
                            group, stem,
                            f"{instance.n_instances} instances exceed the {MAX_INSTANCES}-instance limit",
                        )
                    )
                    continue

            boxes = []
            bbox_path = bbox_dir / group / (stem + ".txt")
            if bbox_path.exists():
                try:
                    boxes = _parse_bbox_file(bbox_path)
                except ValueError as exc:
                    issues.append(ValidationIssue(group, stem, f"malformed bboxes: {exc}"))
                    continue
                if instance is not None:
                    expected = _tight_boxes(instance)
                    if sorted(boxes) != sorted(expected):
                        issues.append(
                            ValidationIssue(group, stem, "bboxes are not tight instance hulls")
                        )
                        continue
            elif instance is not None:
                boxes = _tight_boxes(instance)

            sizes = []
            if instance is not None:
                total = instance.labels.size
                for k in range(1, instance.n_instances + 1):
                    sizes.append(float(np.count_nonzero(instance.labels == k) / total))

            records.append(
                ImageRecord(
                    name=stem,
                    image_path=image_path,
                    object_gt_path=gt_path,
                    instance_gt_path=instance_path if instance is not None else None,
                    bboxes=boxes,
                    height=obj.height,
                    width=obj.width,
                    fg_pixels=int(binary.sum()),
                    instance_sizes=sizes,
                    content_key=hashlib.sha256(
                        obj.labels.tobytes() + str(obj.shape).encode()
                    ).hexdigest(),
                )
            )
        if group not in taxonomy:
            issues.append(ValidationIssue(group, "", "group missing from taxonomy"))
        groups.append(
            GroupRecord(group_id=group, super_class=taxonomy.get(group, "unknown"), images=records)
        )
    return DatasetIndex(root=root, groups=groups, issues=issues, taxonomy=taxonomy)


def compute_stats(index: DatasetIndex) -> DatasetStats:
    """Aggregate counts, instance histograms and size distributions."""
    if not index.groups:
        raise CosalError("empty dataset")
    count_hist = {"1": 0, "2": 0, "3+": 0}
    sizes = []
    n_instances = 0
    fg_ratios = []
    per_super: dict[str, dict[str, int]] = {}
    skipped_instance_stats = 0
    for group in index.groups:
        sc = per_super.setdefault(group.super_class, {"subclasses": 0, "images": 0})
        sc["subclasses"] += 1
        sc["images"] += len(group.images)
        # content-keyed order keeps the float reductions stable under renaming
        for rec in sorted(group.images, key=lambda r: r.content_key):
            fg_ratios.append(rec.fg_pixels / (rec.height * rec.width))
            if rec.instance_gt_path is None:
                skipped_instance_stats += 1
                continue
            n = len(rec.instance_sizes)
            n_instances += n
            if n >= 3:
                count_hist["3+"] += 1
            elif n >= 1:
                count_hist[str(n)] += 1
            sizes.extend(rec.instance_sizes)
    hist = [0] * SIZE_HISTOGRAM_BINS
    for s in sizes:
        hist[min(int(s * SIZE_HISTOGRAM_BINS), SIZE_HISTOGRAM_BINS - 1)] += 1
    notes = [
        "instances counted by distinct mask labels (disconnected parts of one label count once)",
    ]
    if skipped_instance_stats:
        notes.append(
            f"{skipped_instance_stats} images without instance gt excluded from instance statistics"
        )
    return DatasetStats(
        n_groups=len(index.groups),
        n_images=index.n_images,
        n_instances=n_instances,
        instance_count_histogram=count_hist,
        instance_size_min=min(sizes) if sizes else 0.0,
        instance_size_max=max(sizes) if sizes else 0.0,
        instance_size_mean=float(np.mean(sizes)) if sizes else 0.0,
        instance_size_histogram=hist,
        per_super_class=per_super,
        mean_fg_ratio=float(np.mean(fg_ratios)) if fg_ratios else 0.0,
        notes=notes,
    )


def mean_mask(masks, canvas: int = MEAN_MASK_CANVAS, keys=None) -> np.ndarray:
    """Average binary masks on a common square canvas.

    Accumulation order is keyed by mask content (or explicit keys), so the
    result is bit-stable under file renaming and enumeration order.
    """
    arrays = []
    for m in masks:
        if isinstance(m, LabelMask):
            arrays.append(m.binary().astype(np.float64))
        else:
            a = np.asarray(m)
            if a.dtype == bool or np.issubdtype(a.dtype, np.integer):
                arrays.append((a > 0).astype(np.float64))
            else:
                arrays.append(np.asarray(a, dtype=np.float64))
    if not arrays:
        raise ValueError("mean_mask needs at least one mask")
    if keys is None:
        keys = [hashlib.sha256(a.tobytes() + str(a.shape).encode()).hexdigest() for a in arrays]
    order = sorted(range(len(arrays)), key=lambda i: keys[i])
    acc = np.zeros((canvas, canvas))
    for i in order:
        acc += resize_bilinear(arrays[i], canvas, canvas)
    return acc / len(arrays)


def group_mean_mask(group: GroupRecord, canvas: int = MEAN_MASK_CANVAS) -> np.ndarray:
    masks = [load_label_mask(rec.object_gt_path) for rec in group.images]
    keys = [rec.content_key for rec in group.images]
    return mean_mask(masks, canvas=canvas, keys=keys)


def dataset_mean_mask(index: DatasetIndex, canvas: int = MEAN_MASK_CANVAS) -> np.ndarray:
    """Overall mean mask; accumulation keyed by (group, content)."""
    masks = []
    keys = []
    for group in index.groups:
        for rec in group.images:
            masks.append(load_label_mask(rec.object_gt_path))
            keys.append(f"{group.group_id}/{rec.content_key}")
    return mean_mask(masks, canvas=canvas, keys=keys)

import numpy as np
import pytest

from cosal import core


def write_group(root, group, masks, instance_masks=None, with_bboxes=False):
    """Write one group's GT (and optional instance/bbox) files."""
    (root / "gt_object" / group).mkdir(parents=True, exist_ok=True)
    (root / "images" / group).mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(masks):
        name = f"im{i}"
        core.save_label_mask((np.asarray(m) > 0).astype(np.uint8), root / "gt_object" / group / f"{name}.png")
        core.save_scalar_map(np.asarray(m, dtype=np.float64) * 0.5 + 0.25,
                             root / "images" / group / f"{name}.png")
        if instance_masks is not None and instance_masks[i] is not None:
            (root / "gt_instance" / group).mkdir(parents=True, exist_ok=True)
            core.save_label_mask(instance_masks[i], root / "gt_instance" / group / f"{name}.png")
            if with_bboxes:
                (root / "bboxes" / group).mkdir(parents=True, exist_ok=True)
                lines = []
                labels = np.asarray(instance_masks[i])
                for k in range(1, labels.max() + 1):
                    rows, cols = np.nonzero(labels == k)
                    lines.append(f"{k} {cols.min()} {rows.min()} {cols.max()} {rows.max()}")
                (root / "bboxes" / group / f"{name}.txt").write_text("\n".join(lines) + "\n")


def make_instances(shape, rects):
    """Instance mask with one label per (r0, r1, c0, c1) rect."""
    m = np.zeros(shape, np.uint8)
    for k, (r0, r1, c0, c1) in enumerate(rects, start=1):
        m[r0:r1, c0:c1] = k
    return m


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """3 groups x 4 images with instance GT; instance counts planted as
    cup=[1,1,2,3], fork=[1,1,1,1], lamp=[1,1,1,1]."""
    root = tmp_path_factory.mktemp("mini_dataset")
    shape = (24, 32)

    cup_instances = [
        make_instances(shape, [(4, 12, 6, 18)]),
        make_instances(shape, [(8, 20, 10, 26)]),
        make_instances(shape, [(2, 10, 2, 10), (14, 22, 18, 30)]),
        make_instances(shape, [(2, 8, 2, 8), (10, 16, 12, 20), (18, 23, 24, 31)]),
    ]
    write_group(root, "cup", [m > 0 for m in cup_instances], cup_instances, with_bboxes=True)

    fork_instances = [make_instances(shape, [(6 + i, 18 + i, 8, 20)]) for i in range(4)]
    write_group(root, "fork", [m > 0 for m in fork_instances], fork_instances)

    lamp_instances = [make_instances(shape, [(3, 21, 4 + 2 * i, 16 + 2 * i)]) for i in range(4)]
    write_group(root, "lamp", [m > 0 for m in lamp_instances], lamp_instances)

    (root / "taxonomy.tsv").write_text("cup\tKitchenware\nfork\tKitchenware\nlamp\tTool\n")
    return root


def write_predictions(pred_root, index, value_fn):
    """Write one prediction PNG per GT image; value_fn(mask_binary) -> map."""
    for group in index.groups:
        (pred_root / group.group_id).mkdir(parents=True, exist_ok=True)
        for rec in group.images:
            mask = core.load_label_mask(rec.object_gt_path).binary()
            core.save_scalar_map(value_fn(mask), pred_root / group.group_id / f"{rec.name}.png")

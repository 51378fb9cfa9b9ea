"""Image decoding, prediction files and dataset ground-truth lookup."""

import csv
import os

import numpy as np

from .errors import FormatError
from .synthgen import read_camera, read_gt

IMAGE_EXTS = (".png", ".jpg", ".jpeg")


def load_image(path):
    """Decode a PNG/JPEG into a ``uint8``/``uint16`` array (gray or RGB)."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode in ("L", "RGB", "I;16"):
                arr = np.asarray(im)
            elif im.mode == "LA":
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"cannot decode image: {exc}", path) from None
    return np.array(arr)


def image_size_of(path):
    from PIL import Image

    with Image.open(path) as im:
        return im.size


def write_predictions(rows, path_or_file):
    """``rows`` are ``(image_id, xy_or_None)``; written sorted by image id."""
    if not hasattr(path_or_file, "write"):
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            return write_predictions(rows, fh)
    w = csv.writer(path_or_file, lineterminator="\n")
    w.writerow(["imageId", "x", "y"])
    for image_id, xy in sorted(rows, key=lambda r: r[0]):
        if xy is None:
            w.writerow([image_id, "none", "none"])
        else:
            w.writerow([image_id, format(float(xy[0]), ".10g"), format(float(xy[1]), ".10g")])


def read_predictions(path):
    """Map image id to a homogeneous VP, or ``None`` for a miss."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip() for c in row] == ["imageId", "x", "y"]:
                continue
            if len(row) != 3:
                raise FormatError(f"expected 3 columns, got {len(row)}", path, lineno)
            image_id, xs, ys = (c.strip() for c in row)
            if image_id in out:
                raise FormatError(f"duplicate image id '{image_id}'", path, lineno)
            if xs.lower() == "none" or ys.lower() == "none":
                out[image_id] = None
                continue
            try:
                x, y = float(xs), float(ys)
            except ValueError:
                raise FormatError("coordinates must be numbers or 'none'", path, lineno) from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise FormatError("non-finite coordinate", path, lineno)
            out[image_id] = np.array([x, y, 1.0])
    return out


def find_ground_truth(directory, size=None):
    """Map image id to ``(gt_vp, (width, height))`` for a dataset directory.

    Ground truth is ``DIR/<id>.txt`` or ``DIR/<id>/gt.txt``. The image size
    comes from ``camera.json``, an image file with the same id, or ``size``.
    """
    if not os.path.isdir(directory):
        raise FormatError("not a directory", directory)
    out = {}
    for name in sorted(os.listdir(directory)):
        full = os.path.join(directory, name)
        if os.path.isdir(full) and os.path.isfile(os.path.join(full, "gt.txt")):
            image_id, gt_path = name, os.path.join(full, "gt.txt")
        elif name.endswith(".txt") and os.path.isfile(full):
            image_id, gt_path = name[:-4], full
        else:
            continue
        x, y = read_gt(gt_path)
        out[image_id] = (np.array([x, y, 1.0]), _size_for(directory, image_id, size))
    return out


def _size_for(directory, image_id, size):
    sub = os.path.join(directory, image_id)
    if os.path.isfile(os.path.join(sub, "camera.json")):
        cam = read_camera(sub)
        return cam.width, cam.height
    for cand in [os.path.join(sub, "image.png")] + [
            os.path.join(directory, image_id + ext) for ext in IMAGE_EXTS]:
        if os.path.isfile(cand):
            return image_size_of(cand)
    if size is None:
        raise FormatError(f"no image size for '{image_id}' (use --size WxH)", directory)
    return size

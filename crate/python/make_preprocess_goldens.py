"""Regenerate the preprocessing golden fixtures.

Inputs are synthetic 8-bit RGB PNGs. The reference output is computed with
torch's antialiased bicubic interpolation (the resampler used by common CLIP
preprocessing stacks), clamped to [0, 1], center-cropped and normalized, and
saved in the VPT1 tensor format. PIL's float-mode bicubic resize is used as a
second, independent reference and the two are reported side by side.

Usage: python python/make_preprocess_goldens.py [output_dir]
"""

import struct
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, ImageDraw

MEAN = np.array([0.48145466, 0.4578275, 0.40821073], dtype=np.float32)
STD = np.array([0.26862954, 0.26130258, 0.27577711], dtype=np.float32)
SIDE = 224


def radiograph_with_ring():
    h = w = 2048
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    lung = np.exp(-(((xx - 700) / 380) ** 2 + ((yy - 1000) / 650) ** 2))
    lung += np.exp(-(((xx - 1350) / 380) ** 2 + ((yy - 1000) / 650) ** 2))
    body = 0.15 + 0.55 * (1 - np.clip(lung, 0, 1)) + 0.1 * yy / h
    nodule = 0.2 * np.exp(-(((xx - 1250) / 30) ** 2 + ((yy - 800) / 30) ** 2))
    gray = np.clip(body + nodule, 0, 1)
    rgb = np.repeat((gray * 255).round().astype(np.uint8)[..., None], 3, axis=2)
    img = Image.fromarray(rgb, "RGB")
    ImageDraw.Draw(img).ellipse((1250 - 150, 800 - 150, 1250 + 150, 800 + 150), outline=(255, 0, 0), width=8)
    return img


def portrait_with_arrow():
    w, h = 1024, 1280
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    gray = 0.3 + 0.4 * np.sin(xx / 90.0) * np.cos(yy / 140.0) ** 2 + 0.2 * xx / w
    rgb = np.repeat((np.clip(gray, 0, 1) * 255).round().astype(np.uint8)[..., None], 3, axis=2)
    img = Image.fromarray(rgb, "RGB")
    d = ImageDraw.Draw(img)
    d.rectangle((300, 630, 560, 650), fill=(255, 0, 0))
    d.polygon([(560, 600), (560, 680), (620, 640)], fill=(255, 0, 0))
    return img


def texture():
    rng = np.random.default_rng(1234)
    w, h = 300, 260
    noise = rng.random((h, w, 3))
    yy, xx = np.mgrid[0:h, 0:w]
    checker = ((xx // 13 + yy // 11) % 2)[..., None] * 0.5
    rgb = np.clip(0.5 * noise + checker, 0, 1)
    return Image.fromarray((rgb * 255).round().astype(np.uint8), "RGB")


def resized_dims(w, h):
    # shortest side to SIDE, long side rounded
    if w <= h:
        return SIDE, int(round(SIDE * h / w))
    return int(round(SIDE * w / h)), SIDE


def center_crop(chw):
    _, h, w = chw.shape
    top, left = (h - SIDE) // 2, (w - SIDE) // 2
    return chw[:, top : top + SIDE, left : left + SIDE]


def torch_reference(img):
    x = torch.from_numpy(np.asarray(img, dtype=np.float64) / 255.0).permute(2, 0, 1)[None]
    w, h = resized_dims(*img.size)
    y = F.interpolate(x, size=(h, w), mode="bicubic", align_corners=False, antialias=True)
    y = y.clamp(0, 1)[0].numpy()
    return center_crop(y)


def pil_reference(img):
    w, h = resized_dims(*img.size)
    planes = []
    for c in range(3):
        band = Image.fromarray(np.asarray(img, dtype=np.float32)[..., c] / 255.0, "F")
        planes.append(np.asarray(band.resize((w, h), Image.BICUBIC), dtype=np.float64))
    return center_crop(np.clip(np.stack(planes), 0, 1))


def normalize(chw):
    return ((chw.astype(np.float32) - MEAN[:, None, None]) / STD[:, None, None]).astype(np.float32)


def write_vpt(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = b"VPT1" + bytes([1, arr.ndim]) + b"".join(struct.pack("<I", d) for d in arr.shape)
    path.write_bytes(header + arr.tobytes())


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures/preprocess"
    out.mkdir(parents=True, exist_ok=True)
    for name, make in [("ring_2048", radiograph_with_ring), ("arrow_1024x1280", portrait_with_arrow), ("texture_300x260", texture)]:
        img = make()
        img.save(out / f"{name}.png", optimize=True)
        ref = torch_reference(img)
        pil = pil_reference(img)
        write_vpt(out / f"{name}.vpt", normalize(ref))
        diff = np.abs(normalize(ref) - normalize(pil)).max()
        print(f"{name}: size={img.size} torch-vs-pil max|diff|={diff:.2e}")


if __name__ == "__main__":
    main()

"""Reference evaluation of the 120-d descriptor for the checkerboard fixture.

Writes tests/fixtures/checkerboard.pgm and tests/fixtures/checkerboard_features.txt.
"""

import pathlib

import numpy as np
from scipy import ndimage

HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


def checkerboard(size=64, block=8):
    img = np.zeros((size, size), dtype=np.uint8)
    for by in range(size // block):
        for bx in range(size // block):
            if (bx + by) % 2:
                img[by * block:(by + 1) * block, bx * block:(bx + 1) * block] = 40 + 25 * ((3 * bx + by) % 9)
    return img


def descriptor(img):
    h, w = img.shape
    p = img.astype(np.int64)
    total = float(h * w)

    intensity = np.bincount(p.ravel() >> 2, minlength=64) / total

    padded = np.pad(p, 1, mode="edge")
    win = lambda dy, dx: padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    gx = (win(-1, 1) + 2 * win(0, 1) + win(1, 1)) - (win(-1, -1) + 2 * win(0, -1) + win(1, -1))
    gy = (win(1, -1) + 2 * win(1, 0) + win(1, 1)) - (win(-1, -1) + 2 * win(-1, 0) + win(-1, 1))
    nz = (gx != 0) | (gy != 0)
    mag = np.sqrt((gx[nz] ** 2 + gy[nz] ** 2).astype(np.float64))
    theta = np.arctan2(gy[nz].astype(np.float64), gx[nz].astype(np.float64))
    bins = np.floor((theta + np.pi) / (2 * np.pi) * 32).astype(np.int64) % 32
    orient = np.bincount(bins, weights=mag, minlength=32)
    if mag.sum() > 0:
        orient = orient / mag.sum()

    ys, xs = np.mgrid[0:h, 0:w]
    cxg, cyg = xs + 0.5, ys + 0.5
    d2 = (cxg - w / 2) ** 2 + (cyg - h / 2) ** 2
    rmax2 = (w / 2) ** 2 + (h / 2) ** 2
    rbin = np.minimum(np.floor(d2 / rmax2 * 16).astype(np.int64), 15)
    ink = p.sum()
    radial = np.bincount(rbin.ravel(), weights=p.ravel().astype(np.float64), minlength=16)
    radial = radial / ink if ink > 0 else np.zeros(16)

    lit = p > 127
    if ink > 0:
        cx = (p * cxg).sum() / ink
        cy = (p * cyg).sum() / ink
        mxx = (p * (cxg - cx) ** 2).sum() / ink
        myy = (p * (cyg - cy) ** 2).sum() / ink
        mxy = (p * (cxg - cx) * (cyg - cy)).sum() / ink
    else:
        cx, cy, mxx, myy, mxy = w / 2, h / 2, 0.0, 0.0, 0.0
    unlit = np.pad(~lit, 1, constant_values=True)
    touches = unlit[:-2, 1:-1] | unlit[2:, 1:-1] | unlit[1:-1, :-2] | unlit[1:-1, 2:]
    boundary = (lit & touches).sum()
    _, components = ndimage.label(lit)
    scalars = [
        lit.sum() / total,
        cx / w,
        cy / h,
        min(1.0, 4 * mxx / (w * w)),
        min(1.0, 4 * myy / (h * h)),
        min(1.0, max(0.0, 0.5 + 2 * mxy / (w * h))),
        boundary / total,
        min(components, 255) / 255,
    ]
    return np.concatenate([intensity, orient, radial, scalars])


def main():
    img = checkerboard()
    h, w = img.shape
    FIXTURES.mkdir(exist_ok=True)
    (FIXTURES / "checkerboard.pgm").write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
    vec = descriptor(img)
    assert vec.shape == (120,)
    (FIXTURES / "checkerboard_features.txt").write_text("".join("%.17g\n" % v for v in vec))


if __name__ == "__main__":
    main()

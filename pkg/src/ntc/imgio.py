"""Image loading, patch sampling, and block (de)composition.

Images are 2-D float64 arrays with intensities in [0, 1]; an 8-bit sample
s maps to s / 255. Files are binary PGM (P5) / PPM (P6) with maxval 255;
color input is converted to grayscale with BT.709 luma weights.
"""

import dataclasses

import numpy as np

from .errors import DataFormatError

BT709_LUMA = (0.2126, 0.7152, 0.0722)


@dataclasses.dataclass
class BlockSet:
    """Flattened non-overlapping B x B tiles of one image.

    ``blocks`` has one row per tile (row-major tile order, row-major pixels
    within a tile). Images whose dimensions are not multiples of ``block``
    are edge-replicate padded; ``height``/``width`` keep the true size.
    """

    blocks: np.ndarray
    block: int
    height: int
    width: int

    @property
    def grid(self):
        b = self.block
        return (-(-self.height // b), -(-self.width // b))


def _read_pnm_tokens(raw, count):
    # header tokens separated by whitespace; '#' starts a comment to EOL
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(raw):
            raise DataFormatError("truncated header")
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = raw.find(b"\n", pos)
            if end < 0:
                raise DataFormatError("unterminated comment")
            pos = end + 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    return tokens, pos + 1  # single whitespace byte terminates the header


def load_image(path):
    """Read a P5/P6 file as a [0, 1] grayscale image."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] not in (b"P5", b"P6"):
        raise DataFormatError(f"not a binary PGM/PPM file: {path}")
    tokens, offset = _read_pnm_tokens(raw, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError(f"bad header field in {path}") from exc
    if width <= 0 or height <= 0:
        raise DataFormatError(f"bad dimensions {width}x{height} in {path}")
    if maxval != 255:
        raise DataFormatError(f"unsupported maxval {maxval} (need 8-bit) in {path}")
    nch = 3 if magic == b"P6" else 1
    need = width * height * nch
    payload = raw[offset:offset + need]
    if len(payload) < need:
        raise DataFormatError(f"truncated payload in {path}")
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    if nch == 1:
        return data.reshape(height, width)
    rgb = data.reshape(height, width, 3)
    r, g, b = BT709_LUMA
    return r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]


def save_pgm(img, path):
    """Write a [0, 1] image as binary PGM, maxval 255."""
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(data.tobytes())


def save_ppm(rgb, path):
    """Write a [0, 1] HxWx3 array as binary PPM, maxval 255."""
    data = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]))
        fh.write(data.tobytes())


def crop_border(img, margin):
    """Drop ``margin`` pixels from every side."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    if 2 * margin >= min(img.shape):
        raise ValueError(f"margin {margin} too large for {img.shape}")
    if margin == 0:
        return img
    return img[margin:-margin, margin:-margin]


def sample_patches(corpus, count, side, rng):
    """Draw ``count`` random side x side patches, uniform over images and offsets.

    Images smaller than the patch are skipped; an empty usable corpus is an
    error. Reproducible for a given generator state.
    """
    usable = [img for img in corpus if min(img.shape) >= side]
    if not usable:
        raise ValueError(f"no corpus image is at least {side}x{side}")
    if count < 1:
        raise ValueError("count must be >= 1")
    out = np.empty((count, side, side))
    for k in range(count):
        img = usable[int(rng.integers(len(usable)))]
        i = int(rng.integers(img.shape[0] - side + 1))
        j = int(rng.integers(img.shape[1] - side + 1))
        out[k] = img[i:i + side, j:j + side]
    return out


def blockify(img, block):
    """Tile an image into flattened block rows (edge-replicate padded)."""
    if block < 1:
        raise ValueError("block size must be >= 1")
    h, w = img.shape
    pad_h = (-h) % block
    pad_w = (-w) % block
    if pad_h or pad_w:
        img = np.pad(img, ((0, pad_h), (0, pad_w)), mode="edge")
    gh, gw = img.shape[0] // block, img.shape[1] // block
    blocks = (img.reshape(gh, block, gw, block)
                 .transpose(0, 2, 1, 3)
                 .reshape(gh * gw, block * block))
    return BlockSet(blocks=blocks, block=block, height=h, width=w)


def unblockify(bs):
    """Reassemble the image; exact inverse of :func:`blockify` on the true region."""
    b = bs.block
    gh, gw = bs.grid
    if bs.blocks.shape != (gh * gw, b * b):
        raise DataFormatError(
            f"block matrix {bs.blocks.shape} inconsistent with "
            f"{bs.height}x{bs.width} at block {b}")
    img = (bs.blocks.reshape(gh, gw, b, b)
              .transpose(0, 2, 1, 3)
              .reshape(gh * b, gw * b))
    return img[:bs.height, :bs.width]


def blockify_batch(patches, block):
    """Blockify a (P, side, side) patch stack into one (N, block^2) matrix.

    Patch sides must be multiples of ``block``; used on training batches
    where the inverse is :func:`unblockify_batch` (an exact permutation).
    """
    p, side, _ = patches.shape
    if side % block:
        raise ValueError("patch side must be a multiple of the block size")
    g = side // block
    return (patches.reshape(p, g, block, g, block)
                   .transpose(0, 1, 3, 2, 4)
                   .reshape(p * g * g, block * block))


def unblockify_batch(blocks, count, side, block):
    g = side // block
    return (blocks.reshape(count, g, g, block, block)
                  .transpose(0, 1, 3, 2, 4)
                  .reshape(count, side, side))

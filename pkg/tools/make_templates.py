"""Regenerate the bundled icon templates (src/privscan/data/templates/*.png).

Each icon is a dark glyph on a light rounded tile; the tile's alpha is the
matching mask, so every template shares one mask shape.
"""

from pathlib import Path

from PIL import Image, ImageDraw

SIZE = 64
SS = 4  # supersampling factor
TILE = (232, 236, 242, 255)
INK = (31, 41, 55, 255)
OUT = Path(__file__).resolve().parents[1] / "src" / "privscan" / "data" / "templates"


def _canvas():
    img = Image.new("RGBA", (SIZE * SS, SIZE * SS), (0, 0, 0, 0))
    d = ImageDraw.Draw(img)
    d.rounded_rectangle([0, 0, SIZE * SS - 1, SIZE * SS - 1], radius=14 * SS, fill=TILE)
    return img, d


def s(*v):
    return [x * SS for x in v]


def location(d):
    d.ellipse(s(18, 10, 46, 38), fill=INK)
    d.polygon(s(20, 29, 44, 29, 32, 55), fill=INK)
    d.ellipse(s(26, 18, 38, 30), fill=TILE)


def camera(d):
    d.rounded_rectangle(s(10, 20, 54, 50), radius=6 * SS, fill=INK)
    d.rectangle(s(24, 14, 40, 22), fill=INK)
    d.ellipse(s(22, 25, 42, 45), fill=TILE)
    d.ellipse(s(27, 30, 37, 40), fill=INK)


def photos(d):
    d.rectangle(s(10, 13, 54, 51), fill=INK)
    d.rectangle(s(14, 17, 50, 47), fill=TILE)
    d.ellipse(s(38, 21, 46, 29), fill=INK)
    d.polygon(s(14, 47, 28, 28, 40, 47), fill=INK)
    d.polygon(s(32, 47, 42, 35, 50, 47), fill=INK)


def account(d):
    d.ellipse(s(22, 9, 42, 29), fill=INK)
    d.pieslice(s(12, 33, 52, 73), 180, 360, fill=INK)
    d.rectangle(s(12, 52, 52, 55), fill=TILE)


def contacts(d):
    d.rounded_rectangle(s(12, 8, 48, 56), radius=4 * SS, fill=INK)
    d.rectangle(s(48, 14, 54, 22), fill=INK)
    d.rectangle(s(48, 28, 54, 36), fill=INK)
    d.rectangle(s(48, 42, 54, 50), fill=INK)
    d.ellipse(s(23, 17, 37, 31), fill=TILE)
    d.pieslice(s(18, 35, 42, 59), 180, 360, fill=TILE)


def microphone(d):
    d.rounded_rectangle(s(24, 8, 40, 38), radius=8 * SS, fill=INK)
    d.arc(s(16, 20, 48, 46), 0, 180, fill=INK, width=4 * SS)
    d.rectangle(s(30, 45, 34, 53), fill=INK)
    d.rectangle(s(22, 52, 42, 56), fill=INK)


GLYPHS = {
    "location": location,
    "camera": camera,
    "photos": photos,
    "account": account,
    "contacts": contacts,
    "microphone": microphone,
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, draw_glyph in GLYPHS.items():
        img, d = _canvas()
        draw_glyph(d)
        img = img.resize((SIZE, SIZE), Image.LANCZOS)
        img.save(OUT / f"{name}.png", optimize=False, compress_level=9)
        print(OUT / f"{name}.png")


if __name__ == "__main__":
    main()

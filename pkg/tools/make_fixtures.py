"""Regenerate the bundled dummy-app captures under src/privscan/data/fixtures/.

Four pages of a fake food-ordering app, each a raw 540x1040 capture with a
status bar, a navigation bar and the floating scan button still visible:

  home      location pin icon + location text   (mixed)
  posting   profile, camera and album icons     (icon only)
  settings  account-related rows, no icons      (text only)
  rewards   nothing privacy related             (empty)

Sidecars are in capture coordinates, like an accessibility dump would be.
"""

import json
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

ROOT = Path(__file__).resolve().parents[1] / "src" / "privscan" / "data"
OUT = ROOT / "fixtures"
W, H = 540, 1040
STATUS, NAV = 40, 40
BUTTON = (470, 820, 526, 876)

BG = (250, 250, 252, 255)
INK = (17, 24, 39, 255)
MUTED = (107, 114, 128, 255)
ACCENT = (234, 88, 12, 255)


def font(size):
    return ImageFont.load_default(size)


def icon(name, scale):
    img = Image.open(ROOT / "templates" / f"{name}.png").convert("RGBA")
    size = round(64 * scale)
    return img.resize((size, size), Image.LANCZOS) if size != 64 else img


class Page:
    def __init__(self, title):
        self.img = Image.new("RGBA", (W, H), BG)
        self.d = ImageDraw.Draw(self.img)
        self.elements = []
        self._chrome()
        self.d.rectangle([0, STATUS, W - 1, STATUS + 70], fill=(255, 255, 255, 255))
        self.d.line([0, STATUS + 70, W, STATUS + 70], fill=(229, 231, 235, 255), width=2)
        self.text((24, STATUS + 20), title, 30, INK)

    def _chrome(self):
        d = self.d
        d.rectangle([0, 0, W - 1, STATUS - 1], fill=(31, 41, 55, 255))
        d.text((18, 9), "9:41", font=font(20), fill=(255, 255, 255, 255))
        d.rectangle([478, 13, 510, 27], outline=(255, 255, 255, 255), width=2)
        d.rectangle([482, 17, 500, 23], fill=(255, 255, 255, 255))
        d.rectangle([0, H - NAV, W - 1, H - 1], fill=(0, 0, 0, 255))
        d.polygon([(150, H - 20), (164, H - 30), (164, H - 10)], fill=(200, 200, 200, 255))
        d.ellipse([262, H - 29, 280, H - 11], outline=(200, 200, 200, 255), width=2)
        d.rectangle([378, H - 28, 394, H - 12], outline=(200, 200, 200, 255), width=2)

    def floating_button(self):
        l, t, r, b = BUTTON
        self.d.ellipse([l, t, r - 1, b - 1], fill=(109, 40, 217, 255))
        self.d.text((l + 19, t + 12), "P", font=font(28), fill=(255, 255, 255, 255))

    def text(self, xy, s, size, fill, record=True):
        f = font(size)
        self.d.text(xy, s, font=f, fill=fill)
        if record:
            l, t, r, b = self.d.textbbox(xy, s, font=f)
            self.elements.append({"box": [int(l) - 4, int(t) - 4, int(r) + 4, int(b) + 4], "text": s})

    def paste(self, name, scale, xy):
        self.img.alpha_composite(icon(name, scale), xy)

    def save(self, name):
        self.floating_button()
        self.img.save(OUT / f"{name}.png", compress_level=9)
        (OUT / f"{name}.sidecar.json").write_text(json.dumps({"elements": self.elements}, indent=1) + "\n")
        print(OUT / f"{name}.png", len(self.elements), "sidecar elements")


def home():
    p = Page("FoodHub")
    d = p.d
    d.rounded_rectangle([24, 130, 516, 178], radius=24, fill=(243, 244, 246, 255))
    p.text((48, 143), "Search dishes and restaurants", 20, MUTED)
    p.paste("location", 1.0, (24, 204))
    p.text((104, 214), "Enable location services", 22, INK)
    p.text((104, 244), "to find stores around you", 18, MUTED)
    p.text((24, 310), "Today's picks", 26, INK)
    for i, (name, stars, col) in enumerate([
        ("Noodle House", "4.6", (251, 191, 36, 255)),
        ("Green Bowl", "4.4", (52, 211, 153, 255)),
        ("Taco Corner", "4.8", (248, 113, 113, 255)),
    ]):
        y = 360 + i * 190
        d.rounded_rectangle([24, y, 516, y + 170], radius=16, fill=(255, 255, 255, 255),
                            outline=(229, 231, 235, 255), width=2)
        d.rounded_rectangle([40, y + 16, 180, y + 154], radius=12, fill=col)
        p.text((200, y + 30), name, 24, INK)
        p.text((200, y + 70), f"Rating {stars}", 18, MUTED)
        d.rounded_rectangle([200, y + 110, 320, y + 146], radius=18, fill=ACCENT)
        p.text((222, y + 117), "Order", 18, (255, 255, 255, 255))
    p.save("home")


def posting():
    p = Page("New post")
    d = p.d
    p.paste("account", 1.25, (24, 140))
    p.text((116, 162), "Share with friends", 22, INK)
    d.rounded_rectangle([24, 250, 516, 560], radius=12, fill=(255, 255, 255, 255),
                        outline=(209, 213, 219, 255), width=2)
    p.text((44, 270), "Write a caption...", 20, MUTED)
    p.paste("camera", 1.0, (40, 600))
    p.paste("photos", 1.0, (140, 600))
    d.rounded_rectangle([360, 880, 516, 936], radius=28, fill=ACCENT)
    p.text((396, 894), "Publish", 22, (255, 255, 255, 255))
    p.save("posting")


def settings():
    p = Page("Settings")
    d = p.d
    rows = ["Account", "Change password", "Notifications", "Dark mode", "Language", "About FoodHub"]
    for i, label in enumerate(rows):
        y = 130 + i * 84
        d.rectangle([0, y, W - 1, y + 76], fill=(255, 255, 255, 255))
        p.text((32, y + 24), label, 24, INK)
        d.line([(500, y + 30), (510, y + 38), (500, y + 46)], fill=MUTED, width=3)
    p.text((32, 660), "Signed in as sam.lee", 18, MUTED)
    p.save("settings")


def rewards():
    p = Page("Rewards")
    d = p.d
    d.rounded_rectangle([24, 140, 516, 340], radius=20, fill=(254, 243, 199, 255))
    p.text((48, 170), "You have 1,250 points", 28, INK)
    p.text((48, 220), "Earn 10 points for every order", 18, MUTED)
    d.rounded_rectangle([48, 270, 200, 316], radius=22, fill=ACCENT)
    p.text((80, 280), "Redeem", 22, (255, 255, 255, 255))
    for i in range(3):
        cx, cy = 110 + i * 160, 460
        d.regular_polygon((cx, cy, 46), 5, rotation=0, fill=(251, 191, 36, 255))
        p.text((cx - 40, cy + 64), f"{(i + 1) * 500} pts", 18, MUTED)
    d.rectangle([200, 640, 340, 760], fill=(239, 68, 68, 255))
    d.rectangle([262, 640, 278, 760], fill=(254, 226, 226, 255))
    p.text((140, 790), "Daily check-in bonus", 20, INK)
    p.save("rewards")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    home()
    posting()
    settings()
    rewards()
    manifest = {
        "capture_size": [W, H],
        "insets": {"top_px": STATUS, "bottom_px": NAV, "exclusion_boxes": [list(BUTTON)]},
        "policy": "dummy_policy.html",
        "conditions": {"icon_only": "posting", "text_only": "settings", "mixed": "home"},
        "pages": ["home", "posting", "settings", "rewards"],
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()

"""PDF builders for the test suite, driven by reportlab."""

from __future__ import annotations

import pytest
from reportlab.pdfgen import canvas

PAGE_SIZE = (612, 792)
LEFT = 72
TOP = 750
LEADING = 14


def draw_page(c: canvas.Canvas, items: list) -> None:
    """Draw one page. An item is a body line (str) or a row of (x, text)
    cells sharing a baseline."""
    y = TOP
    for item in items:
        if isinstance(item, str):
            c.drawString(LEFT, y, item)
        else:
            for x, text in item:
                c.drawString(x, y, text)
        y -= LEADING
    c.showPage()


@pytest.fixture
def pdf_factory(tmp_path):
    def build(name: str, pages: list[list], **canvas_kwargs):
        path = tmp_path / name
        c = canvas.Canvas(str(path), pagesize=PAGE_SIZE, **canvas_kwargs)
        for items in pages:
            draw_page(c, items)
        c.save()
        return path

    return build

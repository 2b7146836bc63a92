"""Regenerate the committed OpenAPI description from the live app factory.

Usage: python3 scripts/export_openapi.py
"""

from __future__ import annotations

import json
from pathlib import Path

from qudkit.service import Store, create_app


def main() -> None:
    app = create_app(Store(":memory:"))
    spec = app.openapi()
    out = Path(__file__).resolve().parent.parent / "openapi.json"
    out.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()

"""Structure the annotation page needs: ratings, the dimension tree and tooltips.

The gating rules themselves run in the browser (static/gate.js).
"""

from __future__ import annotations

from typing import Any

from app.core.taxonomy import IN_LABELS, dimensions

# IN ratings that open the reasons fieldset
REASON_RATINGS = (1, 2)


def form_schema() -> dict[str, Any]:
    """Dimension tree and labels for the browser form and tooltips."""
    return {
        "ratings": [{"value": k, "label": v} for k, v in sorted(IN_LABELS.items())],
        "reason_ratings": list(REASON_RATINGS),
        "dimensions": [
            {
                "id": d.id.value,
                "parent": d.parent.value if d.parent else None,
                "level": d.level.value,
                "name": d.name,
                "definition": d.definition,
            }
            for d in dimensions()
        ],
    }

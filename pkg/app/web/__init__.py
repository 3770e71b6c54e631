"""UI (web) layer: templates, static assets, routes."""

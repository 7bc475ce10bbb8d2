"""cesoforge: structured cyber-exercise scenario generation.

Unstructured incident articles go in; tagged breadcrumbs, draft incidents,
APT-enhanced graphs, trend reports, and full STIX 2.1 exercise bundles with
MSEL skeletons come out. Operated through the ``cesoforge`` CLI, a local
HTTP service, and the companion web UI.
"""

__version__ = "0.1.0"

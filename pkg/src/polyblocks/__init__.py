"""Polynomial classifier blocks with brute-force degree certification.

The package splits into the block zoo and its certification oracles
(``blocks``, ``oracle``, ``verify``), the numerical substrate (``tensor``,
``autodiff``, ``functional``), architecture tooling (``netzoo``), and the
desk-scale experiment harness (``data``, ``trainer``, ``runs``) exposed over
an HTTP service (``service``) with a thin command-line client (``cli``).
"""

__version__ = "0.1.0"

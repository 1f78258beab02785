"""Force-feedback skill adaptation: DMP skills, recurrent feedback models,
and a contact-polishing simulator."""

try:
    from ._core import *  # noqa: F401,F403  (installed package layout)
    from ._core import __version__
except ImportError:  # in-tree build: _core sits next to the package on sys.path
    from _core import *  # noqa: F401,F403
    from _core import __version__

"""Digital volume correlation toolkit with image-matching self-correction."""

from dvctk._core import *  # noqa: F401,F403
from dvctk._core import __doc__  # noqa: F401

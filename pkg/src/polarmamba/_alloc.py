"""Process-wide allocator tuning for the training hot path.

Training allocates and frees the same multi-megabyte activation buffers
every step; with default glibc settings each one round-trips through
mmap/munmap and the kernel's page zeroing. Raising the mmap and trim
thresholds keeps those blocks on the heap for reuse. Values are only ever
raised once; failure (non-glibc platform) is silently ignored.
"""

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_enabled = False


def enable():
    global _enabled
    if _enabled:
        return
    _enabled = True
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    except OSError:
        pass

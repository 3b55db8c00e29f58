import hashlib
import socket
import threading
import uuid
from datetime import datetime


def make_run_id() -> str:
    """Six hex digits identifying one CLI run in the logs."""
    seed = f"{datetime.now().strftime('%Y%m%d%H%M%S%f')}-{threading.current_thread().ident}-{socket.gethostname()}"
    return hashlib.sha256(f"{seed}-{uuid.uuid4().hex}".encode()).hexdigest()[:6]

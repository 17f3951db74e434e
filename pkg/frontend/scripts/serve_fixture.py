"""Start a throwaway gateway with a fixture store for console tests.

Prints one JSON line {"port", "item", "operator", "password"} once the
server accepts connections, then serves until killed.
"""

import json
import socket
import sys
import tempfile
import threading
from pathlib import Path

import uvicorn

REPO = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO / "src"))
sys.path.insert(0, str(REPO / "tests"))

from itemforge.bundle import import_bundle, make_bundle
from itemforge.http_api import build_app
from itemforge.kernel import Kernel

from fixtures import fixture_bundle_entries


def main():
    tmp = tempfile.mkdtemp(prefix="itemforge-console-")
    kernel = Kernel.create(Path(tmp) / "store")
    admin = kernel.agents.add("admin", "admin-pw", ["admin", "designer", "operator"])
    kernel.agents.add("operator", "operator-pw", ["operator"])
    import_bundle(kernel, make_bundle(fixture_bundle_entries()), admin.agent_id)
    desc = kernel.store.resolve_path("/desc/ProductDesc")
    item = kernel.descriptions.instantiate(desc, 1, "CONSOLE-1", admin.agent_id)

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(build_app(kernel), host="127.0.0.1",
                                           port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        pass
    print(json.dumps({"port": port, "item": item, "desc": desc,
                      "operator": "operator", "password": "operator-pw",
                      "admin": "admin", "admin_password": "admin-pw"}),
          flush=True)
    thread.join()


if __name__ == "__main__":
    main()

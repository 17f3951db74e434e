"""Standalone driver for the crash-injection harness.

Initializes a store (bootstrap + fixture bundle + agents), then creates and
drives product items in a tight loop, printing an ACK line after every
acknowledged (fsynced) write. The parent test kills this process with
SIGKILL at a random moment and verifies that every acknowledged event
survives reopen and that the invariant audit passes.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from itemforge.bundle import import_bundle, make_bundle
from itemforge.kernel import Kernel

from fixtures import assembly_doc, fixture_bundle_entries, measurement_doc


def main(store_path: str):
    kernel = Kernel.create(store_path)
    agent = kernel.agents.add("driver", "pw", ["operator", "designer", "admin"])
    import_bundle(kernel, make_bundle(fixture_bundle_entries()), agent.agent_id)
    desc = kernel.store.resolve_path("/desc/ProductDesc")
    print("READY", flush=True)

    def ack(item, event):
        print(f"ACK {item} {event.event_id}", flush=True)

    i = 0
    while True:
        item = kernel.descriptions.instantiate(desc, 1, f"CRASH-{i}",
                                               agent.agent_id)
        ack(item, kernel.store.events(item)[0])
        for path, transition, outcome in [
            ("/Register", "Start", None), ("/Register", "Complete", None),
            ("/Measure", "Start", None),
            ("/Measure", "Complete", measurement_doc(10.5 + i)),
            ("/Assemble", "Start", None),
            ("/Assemble", "Complete", assembly_doc(i % 10)),
        ]:
            event = kernel.execute(item, agent.agent_id, path, transition,
                                   outcome=outcome)
            ack(item, event)
        i += 1


if __name__ == "__main__":
    main(sys.argv[1])

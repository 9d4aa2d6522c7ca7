"""
Watching a drop directory
=========================

New feed files are scored as they land and each unseen CVE is routed to a
queue. Restarting against the same alert log never re-alerts.
"""

# %%
import os
import tempfile
from collections import Counter

from threatgraph.cli import Watcher, fixture_bytes, read_alert_log

work = tempfile.mkdtemp(prefix="threatgraph-watch-")
drop = os.path.join(work, "drop")
os.makedirs(drop)
log_path = os.path.join(work, "alerts.jsonl")

with open(os.path.join(drop, "feed-001.json"), "wb") as fh:
    fh.write(fixture_bytes("sample_feed.json"))

# A fixed clock keeps the log reproducible.
Watcher(drop, log_path, clock=lambda: 1.7e9).run(once=True)
alerts = read_alert_log(log_path)
print(len(alerts), "alerts")
for a in alerts[:5]:
    print(a.to_json())

# %% [markdown]
# Same file, new process: the seen set comes back from the log.

# %%
Watcher(drop, log_path, clock=lambda: 1.7e9).run(once=True)
print(len(read_alert_log(log_path)), "alerts after restart")

# %%
print(Counter(a.queue.value for a in read_alert_log(log_path)))

import mimetypes
import os

from flask import Flask, abort, request, send_file

app = Flask(__name__)
UPLOAD_ROOT = "/srv/uploads"


def human_size(n):
    for unit in ("B", "KB", "MB", "GB"):
        if n < 1024:
            return "%d %s" % (n, unit)
        n //= 1024
    return "%d TB" % n


@app.route("/files")
def index():
    entries = []
    for name in sorted(os.listdir(UPLOAD_ROOT)):
        size = os.path.getsize(os.path.join(UPLOAD_ROOT, name))
        entries.append({"name": name, "size": human_size(size)})
    return {"files": entries}


@app.route("/download")
def download():
    filename = request.args.get("file")
    if not filename:
        abort(400)
    path = os.path.join(UPLOAD_ROOT, filename)
    if not os.path.isfile(path):
        abort(404)
    kind, _ = mimetypes.guess_type(path)
    return send_file(path, mimetype=kind or "application/octet-stream")

import datetime

from flask import Flask, request, make_response
from markupsafe import escape

app = Flask(__name__)
COMMENTS = []


def timestamp():
    return datetime.datetime.utcnow().strftime("%Y-%m-%d %H:%M")


@app.route("/comments", methods=["POST"])
def add_comment():
    author = request.form.get("author", "anonymous")
    text = request.form.get("text", "")
    COMMENTS.append((author, text, timestamp()))
    return {"count": len(COMMENTS)}


@app.route("/comments")
def show_comments():
    parts = ["<html><body><h1>Comments</h1><ul>"]
    for author, text, when in COMMENTS:
        parts.append("<li><b>%s</b> (%s): %s</li>" % (author, when, text))
    parts.append("</ul></body></html>")
    resp = make_response("".join(parts))
    resp.headers["Content-Type"] = "text/html"
    return resp

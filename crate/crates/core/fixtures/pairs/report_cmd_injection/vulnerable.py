import os
import subprocess
import tempfile

REPORT_DIR = "/var/reports"


def report_path(name):
    return os.path.join(REPORT_DIR, name + ".pdf")


def list_reports():
    return sorted(f for f in os.listdir(REPORT_DIR) if f.endswith(".pdf"))


def render_report(title, body):
    workdir = tempfile.mkdtemp()
    source = os.path.join(workdir, "report.md")
    with open(source, "w") as fh:
        fh.write("# " + title + "\n\n" + body)
    output = report_path(title)
    os.system("pandoc " + source + " -o " + output)
    return output


def cleanup(days):
    cutoff = days * 86400
    removed = 0
    for name in list_reports():
        path = report_path(name[:-4])
        if os.path.getmtime(path) < cutoff:
            os.remove(path)
            removed += 1
    return removed

#include <stdarg.h>
#include <stdio.h>
#include <string.h>
#include <time.h>

static FILE *log_file;

int log_open(const char *path)
{
    log_file = fopen(path, "a");
    return log_file != NULL;
}

void log_close(void)
{
    if (log_file) {
        fclose(log_file);
        log_file = NULL;
    }
}

static void stamp(char *buf, size_t len)
{
    time_t now = time(NULL);
    strftime(buf, len, "%Y-%m-%d %H:%M:%S", localtime(&now));
}

void log_message(const char *user, const char *message)
{
    char when[32];
    stamp(when, sizeof(when));
    fprintf(log_file, "[%s] %s: ", when, user);
    fputs(message, log_file);
    fputc('\n', log_file);
}

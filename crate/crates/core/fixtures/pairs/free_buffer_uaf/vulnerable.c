#include <stdio.h>
#include <stdlib.h>
#include <string.h>

struct buffer {
    char *data;
    size_t len;
    size_t cap;
};

int buffer_init(struct buffer *b, size_t cap)
{
    b->data = malloc(cap);
    b->len = 0;
    b->cap = cap;
    return b->data != NULL;
}

int buffer_append(struct buffer *b, const char *s)
{
    size_t n = strlen(s);
    if (b->len + n >= b->cap) {
        return 0;
    }
    memcpy(b->data + b->len, s, n);
    b->len += n;
    b->data[b->len] = '\0';
    return 1;
}

void buffer_reset(struct buffer *b)
{
    free(b->data);
    b->len = 0;
}

void buffer_print(const struct buffer *b)
{
    if (b->data) {
        puts(b->data);
    }
}

#include <stdint.h>
#include <stdlib.h>
#include <string.h>

struct record {
    uint32_t key;
    uint32_t value;
};

struct table {
    struct record *rows;
    size_t count;
};

void table_free(struct table *t)
{
    free(t->rows);
    t->rows = NULL;
    t->count = 0;
}

uint32_t table_sum(const struct table *t)
{
    uint32_t sum = 0;
    for (size_t i = 0; i < t->count; i++) {
        sum += t->rows[i].value;
    }
    return sum;
}

int table_load(struct table *t, const uint8_t *data, uint32_t count)
{
    uint32_t bytes = count * sizeof(struct record);
    t->rows = malloc(bytes);
    if (t->rows == NULL) {
        return -1;
    }
    memcpy(t->rows, data, (size_t)count * sizeof(struct record));
    t->count = count;
    return 0;
}

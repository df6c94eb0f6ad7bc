#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static unsigned table[256];

static void init_table(void) {
    for (unsigned i = 0; i < 256; i++) {
        unsigned c = i;
        for (int k = 0; k < 8; k++)
            c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
}

static unsigned update(unsigned crc, const unsigned char *buf, size_t len) {
    crc = ~crc;
    for (size_t i = 0; i < len; i++)
        crc = table[(crc ^ buf[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

static unsigned digest(const char *text) {
    return update(0, (const unsigned char *)text, strlen(text));
}

int main(int argc, char **argv) {
    init_table();
    const char *input = argc > 1 ? argv[1] : "hello, checksum world";
    unsigned value = digest(input);
    if (value % 7 == 0)
        printf("lucky checksum: %08x\n", value);
    else
        printf("checksum: %08x\n", value);
    return 0;
}

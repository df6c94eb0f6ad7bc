#include <ctype.h>
#include <stdio.h>
#include <string.h>

enum kind { T_WORD, T_NUMBER, T_PUNCT, T_END };

struct token {
    enum kind kind;
    char text[32];
};

static const char *skip_spaces(const char *p) {
    while (*p && isspace((unsigned char)*p))
        p++;
    return p;
}

static const char *read_word(const char *p, struct token *out) {
    size_t n = 0;
    while (*p && (isalpha((unsigned char)*p) || *p == '_') && n < sizeof(out->text) - 1)
        out->text[n++] = *p++;
    out->text[n] = 0;
    out->kind = T_WORD;
    return p;
}

static const char *read_number(const char *p, struct token *out) {
    size_t n = 0;
    while (*p && isdigit((unsigned char)*p) && n < sizeof(out->text) - 1)
        out->text[n++] = *p++;
    out->text[n] = 0;
    out->kind = T_NUMBER;
    return p;
}

static const char *next_token(const char *p, struct token *out) {
    p = skip_spaces(p);
    if (!*p) {
        out->kind = T_END;
        out->text[0] = 0;
        return p;
    }
    if (isalpha((unsigned char)*p) || *p == '_')
        return read_word(p, out);
    if (isdigit((unsigned char)*p))
        return read_number(p, out);
    out->kind = T_PUNCT;
    out->text[0] = *p;
    out->text[1] = 0;
    return p + 1;
}

int main(void) {
    const char *program = "let answer = 42; print(answer + 1);";
    const char *p = program;
    struct token tok;
    int words = 0, numbers = 0, puncts = 0;
    do {
        p = next_token(p, &tok);
        switch (tok.kind) {
        case T_WORD: words++; break;
        case T_NUMBER: numbers++; break;
        case T_PUNCT: puncts++; break;
        case T_END: break;
        }
    } while (tok.kind != T_END);
    printf("tokens: %d words, %d numbers, %d punctuation\n", words, numbers, puncts);
    return strcmp(p, "") == 0 ? 0 : 1;
}

/* String conversion helpers modelled on a small script interpreter. */

/* Copies str2 into str1. The caller sizes str1. */

int Jsi_Strlen(const char *str);
char *Jsi_Strcpy(char *str1, const char *str2);

char *Jsi_ValueToString(int argc, char **argv, int flags)
{
    char *str;
    char *p;
    int cnt;
    int len;

    str = argv[1];
    cnt = argc - 1;
    p = 0;
    if (flags > Jsi_Strlen(str)) {
        return str;
    }
    len = 0;
    if (cnt > 0) {
        len = cnt + 1;
        p = (char *)malloc(len);
        if (p == 0) {
            return 0;
        }
        Jsi_Strcpy(p, str);
    }
    return p;
}

int Jsi_Strlen(const char *str)
{
    int n = 0;
    while (str[n] != 0) {
        n = n + 1;
    }
    return n;
}

char *Jsi_Strcpy(char *str1, const char *str2)
{
    if (str1 == 0) {
        return 0;
    }
    /* no bound on the destination */
    strcpy(str1, str2);
    return str1;
}

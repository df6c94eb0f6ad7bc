#include <stdio.h>
#include <stdlib.h>

static void swap(int *a, int *b) {
    int t = *a;
    *a = *b;
    *b = t;
}

static int partition(int *data, int lo, int hi) {
    int pivot = data[hi];
    int i = lo - 1;
    for (int j = lo; j < hi; j++) {
        if (data[j] < pivot) {
            i++;
            swap(&data[i], &data[j]);
        }
    }
    swap(&data[i + 1], &data[hi]);
    return i + 1;
}

static void quicksort(int *data, int lo, int hi) {
    if (lo < hi) {
        int p = partition(data, lo, hi);
        quicksort(data, lo, p - 1);
        quicksort(data, p + 1, hi);
    }
}

static long fill(int *data, int n, unsigned seed) {
    long sum = 0;
    for (int i = 0; i < n; i++) {
        seed = seed * 1103515245u + 12345u;
        data[i] = (int)(seed >> 16) % 1000;
        sum += data[i];
    }
    return sum;
}

int main(void) {
    enum { N = 64 };
    int data[N];
    long sum = fill(data, N, 42);
    quicksort(data, 0, N - 1);
    printf("sorted %d values, sum %ld, median %d\n", N, sum, data[N / 2]);
    if (data[0] > data[N - 1]) {
        fprintf(stderr, "sort failed\n");
        return 1;
    }
    return 0;
}

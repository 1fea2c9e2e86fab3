#include <stdio.h>
#include <string.h>
#include "csaudit.h"

static const char *CSV =
    "contest_id,district,candidate,party,votes,total_ballots\n"
    "duel,D,Alice,A,80,100\n"
    "duel,D,Bob,B,20,100\n";

int main(void) {
    CsaSession *s = NULL;
    if (csa_session_create(CSV, NULL, "{\"alpha\":0.05,\"strategy\":\"apk\",\"mode\":\"rla\",\"seed\":7}", &s) != CSA_STATUS_OK) {
        return 10;
    }
    int overall = CSA_OPEN;
    int steps = 0;
    while (overall == CSA_OPEN) {
        char *id = NULL;
        if (csa_session_draw(s, &id) != CSA_STATUS_OK) {
            return 11;
        }
        if (csa_session_record(s, id, "Alice", &overall) != CSA_STATUS_OK) {
            return 12;
        }
        csa_string_free(id);
        steps++;
    }
    if (csa_session_record(s, "no-such-ballot", "Alice", NULL) != CSA_STATUS_REJECTED) {
        return 13;
    }
    char *err = csa_last_error();
    if (err == NULL || strstr(err, "no-such-ballot") == NULL) {
        return 14;
    }
    csa_string_free(err);
    csa_session_free(s);
    printf("certified after %d\n", steps);
    return overall == CSA_CERTIFIED ? 0 : 15;
}

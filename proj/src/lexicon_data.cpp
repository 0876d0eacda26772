// SPDX-License-Identifier: Apache-2.0
//
// Pronunciations taken from the CMU pronouncing dictionary, stress digits
// removed. Extend at runtime with Lexicon::from_file on a full cmudict.

#include <string_view>

namespace b2t::detail {

extern const std::string_view kBundledLexicon = R"(A  AH
ABOUT  AH B AW T
AGAIN  AH G EH N
ALL  AO L
AM  AE M
AND  AH N D
ARE  AA R
BACK  B AE K
BAD  B AE D
BATHROOM  B AE TH R UW M
BE  B IY
BED  B EH D
BIG  B IH G
BIRD  B ER D
BLUE  B L UW
BOOK  B UH K
BOY  B OY
BROTHER  B R AH DH ER
BROWN  B R AW N
CALL  K AO L
CAN  K AE N
CANNOT  K AE N AA T
CAR  K AA R
CAT  K AE T
CHAIR  CH EH R
CHURCH  CH ER CH
CLOSE  K L OW Z
COLD  K OW L D
COME  K AH M
COULD  K UH D
DAY  D EY
DO  D UW
DOCTOR  D AA K T ER
DOG  D AO G
DOOR  D AO R
DRINK  D R IH NG K
EAT  IY T
EIGHT  EY T
FAMILY  F AE M AH L IY
FATHER  F AA DH ER
FEEL  F IY L
FIND  F AY N D
FISH  F IH SH
FIVE  F AY V
FOOD  F UW D
FOR  F AO R
FOUR  F AO R
FOX  F AA K S
FRIEND  F R EH N D
GET  G EH T
GIVE  G IH V
GO  G OW
GOOD  G UH D
GREEN  G R IY N
HAND  HH AE N D
HAPPY  HH AE P IY
HAVE  HH AE V
HE  HH IY
HEAD  HH EH D
HELLO  HH AH L OW
HELP  HH EH L P
HER  HH ER
HERE  HH IY R
HIM  HH IH M
HOME  HH OW M
HOT  HH AA T
HOUSE  HH AW S
HOW  HH AW
I  AY
IN  IH N
INSIDE  IH N S AY D
IS  IH Z
IT  IH T
JOY  JH OY
JUDGE  JH AH JH
JUMP  JH AH M P
JUST  JH AH S T
KNOW  N OW
LAZY  L EY Z IY
LET  L EH T
LIGHT  L AY T
LIKE  L AY K
LITTLE  L IH T AH L
LONG  L AO NG
LOOK  L UH K
LOVE  L AH V
MAKE  M EY K
ME  M IY
MEASURE  M EH ZH ER
MORE  M AO R
MORNING  M AO R N IH NG
MOTHER  M AH DH ER
MUSIC  M Y UW Z IH K
MY  M AY
NEED  N IY D
NEW  N UW
NIGHT  N AY T
NINE  N AY N
NO  N OW
NOT  N AA T
NOW  N AW
NURSE  N ER S
OF  AH V
OLD  OW L D
ON  AA N
ONE  W AH N
OPEN  OW P AH N
OUR  AW ER
OUT  AW T
OUTSIDE  AW T S AY D
OVER  OW V ER
PAIN  P EY N
PEOPLE  P IY P AH L
PHONE  F OW N
PLAY  P L EY
PLEASE  P L IY Z
QUICK  K W IH K
READ  R IY D
REALLY  R IH L IY
RED  R EH D
ROOM  R UW M
SAY  S EY
SEE  S IY
SEVEN  S EH V AH N
SHE  SH IY
SHOULD  SH UH D
SISTER  S IH S T ER
SIX  S IH K S
SLEEP  S L IY P
SMALL  S M AO L
SOME  S AH M
SUN  S AH N
TABLE  T EY B AH L
TAKE  T EY K
TALK  T AO K
TELL  T EH L
TEN  T EH N
THANK  TH AE NG K
THAT  DH AE T
THE  DH AH
THEM  DH EH M
THERE  DH EH R
THEY  DH EY
THING  TH IH NG
THINK  TH IH NG K
THIS  DH IH S
THREE  TH R IY
TIME  T AY M
TIRED  T AY ER D
TO  T UW
TODAY  T AH D EY
TOMORROW  T AH M AA R OW
TOY  T OY
TREE  T R IY
TWO  T UW
UP  AH P
US  AH S
VERY  V EH R IY
WALK  W AO K
WANT  W AA N T
WARM  W AO R M
WAS  W AA Z
WATER  W AO T ER
WAY  W EY
WE  W IY
WHAT  W AH T
WHEN  W EH N
WHERE  W EH R
WHO  HH UW
WHY  W AY
WILL  W IH L
WITH  W IH DH
WORK  W ER K
WORLD  W ER L D
WOULD  W UH D
WRITE  R AY T
YEAR  Y IH R
YELLOW  Y EH L OW
YES  Y EH S
YOU  Y UW
YOUR  Y AO R
ZERO  Z IH R OW
ZOO  Z UW
)";

}  // namespace b2t::detail

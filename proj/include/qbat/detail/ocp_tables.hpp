#pragma once

// Open-circuit potential tables on a uniform stoichiometry grid of 201 points
// over [0, 1]. Values sampled from the published graphite / NMC811 fits of
// Chen et al. (J. Electrochem. Soc. 167, 080534, 2020). Representative curves,
// not measurements of any particular pack.

#include <array>

namespace qbat::detail {

inline constexpr std::array<double, 201> kGraphiteOcp = {
    2.3835421740089928, 2.029881122138963, 1.739382166798352, 1.5007534365819983,
    1.3047179040670476, 1.1436525596982787, 1.0112917671259569, 0.90248324697273463,
    0.81298717927846587, 0.73931059302635027, 0.67857059461083047, 0.62838113891681557,
    0.58675902731443408, 0.55204568937113752, 0.52284213941723179, 0.49795537215260632,
    0.47635544402930236, 0.45714360194504144, 0.43953295095379091, 0.42284389477532675,
    0.40651611080654487, 0.39013598770969599, 0.37347251809586823, 0.35650679877884772,
    0.33943506195295425, 0.32262908527590733, 0.30655382857265306, 0.29166344800955712,
    0.27830920390831027, 0.26668669702971409, 0.25683014800576709, 0.24864225989001409,
    0.24193993413225959, 0.23649886598219003, 0.23208775642167723, 0.22848992693808579,
    0.22551420846787457, 0.22299835179015079, 0.22080801013802032, 0.21883356144869909,
    0.21698622318182789, 0.21519428046957487, 0.21339982733104321, 0.21155616852238152,
    0.20962589125494183, 0.20757954586141256, 0.20539484095919086, 0.20305624244817325,
    0.20055485656649122, 0.19788847129564155, 0.19506162792794346, 0.19208559833491332,
    0.18897815701282872, 0.18576306312673052, 0.18246920693353608, 0.17912942407515364,
    0.17577903365504102, 0.17245420270148715, 0.16919027140343593, 0.16602018376783323,
    0.16297315514849509, 0.16007367482800494, 0.15734089617015443, 0.15478841842546281,
    0.15242442196603234, 0.15025208865982811, 0.14827022370447457, 0.14647399359352828,
    0.14485570377694856, 0.14340555485773895, 0.14211233388545275, 0.1409640143985682,
    0.13994825340171674, 0.13905278456467624, 0.13826571451899278, 0.13757573362139219,
    0.13697225459923507, 0.13644549278335905, 0.13598650078837188, 0.13558716901789158,
    0.13524020161744779, 0.13493907571589028, 0.13467799013578499, 0.13445180829160852,
    0.13425599875988331, 0.13408657599512092, 0.13394004285926517, 0.13381333600135925,
    0.13370377463663377, 0.1336090128988271, 0.13352699564701584, 0.13345591737172308,
    0.13339418363987421, 0.1333403743208629, 0.13329320762327826, 0.13325150371914182,
    0.133214146412301, 0.13318004088771584, 0.13314806501999754, 0.13311701097577652,
    0.1330855128593352, 0.13305195486062874, 0.13301435270328579, 0.132970199103669,
    0.13291626143089869, 0.13284831689978246, 0.13276080775895815, 0.13264639682209622,
    0.13249540390423603, 0.13229510922914478, 0.13202892584955761, 0.13167547795963802,
    0.13120768789409676, 0.13059208643020581, 0.12978872991067439, 0.12875232444873003,
    0.12743535968520417, 0.1257940822902551, 0.12379771524718026, 0.12144015373559132,
    0.1187514397575235, 0.11580440019644449, 0.11271155825525643, 0.10961026910279353,
    0.10663939770077137, 0.10391545870728652, 0.10151644754286086, 0.099477356207301151,
    0.097795878724085336, 0.096443577713335504, 0.095377739703919273, 0.09455096513902983,
    0.093917526047600869, 0.093436800640303186, 0.093074594464087196, 0.092803167587089869,
    0.092600595211818668, 0.092449869326979878, 0.092337973208913321, 0.092255042316400249,
    0.092193654504653555, 0.092148254646023137, 0.092114701031563315, 0.092089914506101683,
    0.092071610644601343, 0.092058097230937858, 0.092048122147346506, 0.092040759683039042,
    0.092035325859391892, 0.09203131552914684, 0.09202835573890833, 0.092026171197955073,
    0.092024558736787637, 0.09202336842915726, 0.092022489646783279, 0.092021840762007021,
    0.09202136154634126, 0.092021007560306123, 0.092020746013540655, 0.092020552710198489,
    0.092020409795283226, 0.092020304091991093, 0.092020225875108302, 0.092020167966112329,
    0.092020125065601782, 0.092020093260805416, 0.092020069662243631, 0.092020052135665095,
    0.09202003910426651, 0.092020029402760231, 0.092020022169690657, 0.092020016767968685,
    0.092020012726223871, 0.092020009695516269, 0.092020007417381214, 0.092020005700236357,
    0.092020004401959704, 0.092020003417022461, 0.092020002666982154, 0.092020002093458689,
    0.092020001652941275, 0.092020001312948602, 0.092020001049188199, 0.092020000843453575,
    0.092020000682067296, 0.092020000554726533, 0.092020000453647402, 0.092020000372929386,
    0.092020000308083161, 0.092020000255679302, 0.092020000213086359, 0.092020000178275774,
    0.09202000014967561, 0.092020000126061249, 0.092020000106473487, 0.092020000090156318,
    0.092020000076510511, 0.092020000065058227, 0.092020000055416037, 0.092020000047274592,
    0.092020000040382688,
};

inline constexpr std::array<double, 201> kNmcOcp = {
    4.6785099145081226, 4.6744352210785358, 4.6703559362869882, 4.6662713592118621,
    4.6621806836927675, 4.6580829828855705, 4.6539771916257209, 4.6498620863057525,
    4.645736261937536, 4.6415981060311466, 4.6374457688809763, 4.6332771298051547,
    4.6290897588377113, 4.6248808733246314, 4.620647288826099, 4.6163853636798073,
    4.6120909365362515, 4.6077592561402767, 4.6033849026078784, 4.5989616994405296,
    4.5944826155384533, 4.5899396565315307, 4.5853237448560975, 4.5806245881870673,
    4.5758305361122815, 4.5709284253423519, 4.5659034143237491, 4.5607388089173853,
    4.5554158818820234, 4.5499136903386308, 4.5442088972806012, 4.5382756056441167,
    4.5320852165842425, 4.525606327548271, 4.5188046906272135, 4.5116432576117305,
    4.504082345238885, 4.4960799622516419, 4.4875923488920968, 4.4785747888206586,
    4.4689827622870872, 4.4587735161616742, 4.4479081288344808, 4.4363541426364002,
    4.4240888187471175, 4.4111030337309654, 4.3974057761845415, 4.3830291097999137,
    4.3680333405542662, 4.3525119605991609, 4.3365957485801463, 4.3204552084467629,
    4.3043003678561256, 4.2883768949048751, 4.2729576053164138, 4.258328798010556,
    4.2447715225572829, 4.2325388270031379, 4.2218311347718815, 4.2127729140121435,
    4.2053944083835084, 4.1996220801149784, 4.1952803998282064, 4.1921057882770514,
    4.189771255404187, 4.18791818207972, 4.1861903459179315, 4.1842650793288758,
    4.1818773752469385, 4.1788344812608829, 4.1750205063655637, 4.170392281332985,
    4.1649688213499569, 4.1588171412642252, 4.1520369791067893, 4.1447464131268621,
    4.1370696452166644, 4.129127550880817, 4.1210310675637167, 4.1128771437700262,
    4.1047467873785539, 4.0967046949767987, 4.0887999713100651, 4.081067520693896,
    4.0735297819780918, 4.0661985670711829, 4.0590768402549102, 4.0521603376531115,
    4.0454389731270304, 4.0388980104142256, 4.032519004206474, 4.026280527892073,
    4.020158715444186, 4.0141276515889146, 4.0081596496548713, 4.0022254616431745,
    3.9962944708139574, 3.990334923614526, 3.9843142644505924, 3.9781996419825596,
    3.9719586564036504, 3.9655604092520171, 3.9589768953911211, 3.9521847355321889,
    3.9451671838660314, 3.9379162611416891, 3.9304347698647, 3.9227378671584017,
    3.9148538332484151, 3.9068237113198485, 3.8986996261948068, 3.8905418051590068,
    3.882414579415336, 3.8743818681335043, 3.8665027674225279, 3.8588278425788936,
    3.8513965619608577, 3.8442360686624149, 3.8373612365193246, 3.8307757645693457,
    3.8244739626705559, 3.8184428698792132, 3.8126644018486147, 3.8071173110340251,
    3.8017788351631072, 3.7966259868070971, 3.7916364921274095, 3.7867894199196286,
    3.7820655570928849, 3.7774475892025894, 3.7729201396788206, 3.7684697128623608,
    3.7640845764818511, 3.7597546102925214, 3.7554711399743148, 3.7512267692761867,
    3.7470152187293202, 3.7428311758388375, 3.738670159259863, 3.7345283978385684,
    3.7304027243502169, 3.7262904831312227, 3.7221894504549162, 3.7180977663465899,
    3.714013876504259, 3.7099364830396944, 3.7058645028454897, 3.7017970325074785,
    3.6977333188019799, 3.6936727339359052, 3.6896147547996723, 3.6855589456047237,
    3.6815049433686688, 3.6774524457914701, 3.6734012011358779, 3.6693509997857099,
    3.6653016672070198, 3.661253058081325, 3.6572050514171917, 3.653157546478095,
    3.6491104593908759, 3.6450637203215486, 3.6410172711237827, 3.6369710633811501,
    3.6329250567773528, 3.6288792177395024, 3.6248335183087512, 3.620787935200207,
    3.6167424490204176, 3.6126970436159667, 3.6086517055312761, 3.604606423557204,
    3.600561188355325, 3.5965159921451093, 3.5924708284434956, 3.5884256918480943,
    3.5843805778566455, 3.5803354827167126, 3.576290403300515, 3.572245337000691,
    3.568200281643513, 3.5641552354165746, 3.5601101968085676, 3.5560651645591452,
    3.5520201376171237, 3.5479751151056771, 3.5439300962933249, 3.539885080569773,
    3.5358400674257879, 3.5317950564363798, 3.5277500472468493, 3.5237050395611114,
    3.5196600331319772, 3.5156150277530518, 3.5115700232519842, 3.5075250194848202,
    3.5034800163313147, 3.4994350136910093, 3.4953900114799641, 3.4913450096280343,
    3.4873000080765877,
};

}  // namespace qbat::detail

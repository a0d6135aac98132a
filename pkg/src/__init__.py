import src.tiling as Tiling
import src.matchgate as Matchgate
import src.network as Network
import src.gaussian as Gaussian
import src.disorder as Disorder
import src.mqa as MQA
import src.parent as Parent
import src.excite as Excite
import src.cli as CLI
